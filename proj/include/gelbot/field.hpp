#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "gelbot/geometry.hpp"

namespace gelbot {

/// Half-open index range of cells along one axis.
struct CellSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end > begin ? end - begin : 0; }
};

/// Discretized gel film over the skin surface. Cell (i, j) spans
/// [i*cell_size, (i+1)*cell_size] x [j*cell_size, (j+1)*cell_size]; storage is row-major in j.
class SkinField {
public:
    SkinField() = default;

    SkinField(std::size_t nx, std::size_t ny, double cell_size, double albedo = 0.35)
        : nx_(nx), ny_(ny), cell_size_(cell_size), thickness_(nx * ny, 0.0), albedo_(nx * ny, albedo) {
        if (nx == 0 || ny == 0) throw std::invalid_argument("SkinField: empty grid");
        if (!(cell_size > 0.0)) throw std::invalid_argument("SkinField: cell_size must be positive");
    }

    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    double cell_size() const { return cell_size_; }
    double cell_area() const { return cell_size_ * cell_size_; }
    Rect bounds() const { return {0.0, 0.0, nx_ * cell_size_, ny_ * cell_size_}; }

    std::size_t index(std::size_t i, std::size_t j) const { return j * nx_ + i; }

    double& thickness(std::size_t i, std::size_t j) { return thickness_[index(i, j)]; }
    double thickness(std::size_t i, std::size_t j) const { return thickness_[index(i, j)]; }
    double& albedo(std::size_t i, std::size_t j) { return albedo_[index(i, j)]; }
    double albedo(std::size_t i, std::size_t j) const { return albedo_[index(i, j)]; }

    std::vector<double>& thickness() { return thickness_; }
    const std::vector<double>& thickness() const { return thickness_; }
    std::vector<double>& albedo() { return albedo_; }
    const std::vector<double>& albedo() const { return albedo_; }

    Rect cell_rect(std::size_t i, std::size_t j) const {
        return {i * cell_size_, j * cell_size_, (i + 1) * cell_size_, (j + 1) * cell_size_};
    }

    /// Cells whose centers c satisfy lo <= c < hi along x.
    CellSpan columns(double lo, double hi) const { return span(lo, hi, nx_); }
    CellSpan rows(double lo, double hi) const { return span(lo, hi, ny_); }

    /// Number of cell centers inside `r` (half-open on the max side).
    std::size_t covered_cells(const Rect& r) const {
        return columns(r.x_min, r.x_max).size() * rows(r.y_min, r.y_max).size();
    }

    double total_volume() const {
        double sum = 0.0;
        for (double t : thickness_) sum += t;
        return sum * cell_area();
    }

private:
    CellSpan span(double lo, double hi, std::size_t n) const {
        const auto clamp_index = [n](double v) {
            if (!(v > 0.0)) return std::size_t{0};
            return std::min(n, static_cast<std::size_t>(v));
        };
        return {clamp_index(std::ceil(lo / cell_size_ - 0.5)), clamp_index(std::ceil(hi / cell_size_ - 0.5))};
    }

    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    double cell_size_ = 1.0;
    std::vector<double> thickness_;
    std::vector<double> albedo_;
};

}  // namespace gelbot
