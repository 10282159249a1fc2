#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "gelbot/detection.hpp"
#include "gelbot/field.hpp"
#include "gelbot/geometry.hpp"

namespace gelbot {

// All region rules below select cells by center: x_min <= center < x_max, same for y.

struct DepositResult {
    std::size_t cells = 0;
    double volume = 0.0;
};

/// Spreads `volume` evenly over the cells whose centers lie in `at`. When no cell center
/// is covered nothing changes and the result reports zero cells.
inline DepositResult deposit(SkinField& world, const Rect& at, double volume) {
    if (!(volume >= 0.0)) throw std::invalid_argument("deposit: negative volume");
    const CellSpan cols = world.columns(at.x_min, at.x_max);
    const CellSpan rows = world.rows(at.y_min, at.y_max);
    const std::size_t n = cols.size() * rows.size();
    if (n == 0) return {};
    if (volume == 0.0) return {n, 0.0};
    const double dh = volume / (static_cast<double>(n) * world.cell_area());
    for (std::size_t j = rows.begin; j < rows.end; ++j)
        for (std::size_t i = cols.begin; i < cols.end; ++i) world.thickness(i, j) += dh;
    return {n, volume};
}

/// Probe passage over `swept` moving in `dir`: each covered cell sends `carry` of its film one
/// cell backwards and loses `loss` of it; the rest stays. A cell with no neighbor behind it
/// keeps its carry share. Updates use the film as it was before the call.
/// Returns the volume removed.
inline double smear_deplete(SkinField& world, const Rect& swept, Direction dir, double carry, double loss) {
    if (carry < 0.0 || loss < 0.0 || carry + loss > 1.0)
        throw std::invalid_argument("smear_deplete: need carry, loss >= 0 and carry + loss <= 1");
    const CellSpan cols = world.columns(swept.x_min, swept.x_max);
    const CellSpan rows = world.rows(swept.y_min, swept.y_max);
    if (cols.size() == 0 || rows.size() == 0 || (carry == 0.0 && loss == 0.0)) return 0.0;

    const int back = -sign(dir);
    std::vector<double> snapshot(cols.size());
    double removed = 0.0;
    for (std::size_t j = rows.begin; j < rows.end; ++j) {
        for (std::size_t i = cols.begin; i < cols.end; ++i) snapshot[i - cols.begin] = world.thickness(i, j);
        for (std::size_t i = cols.begin; i < cols.end; ++i) {
            const double h = snapshot[i - cols.begin];
            if (h == 0.0) continue;
            const double moved = carry * h;
            const double lost = loss * h;
            const auto target = static_cast<std::ptrdiff_t>(i) + back;
            const bool has_target = target >= 0 && target < static_cast<std::ptrdiff_t>(world.nx());
            world.thickness(i, j) -= lost + (has_target ? moved : 0.0);
            if (has_target) world.thickness(static_cast<std::size_t>(target), j) += moved;
            removed += lost;
        }
    }
    return removed * world.cell_area();
}

/// Fraction of footprint cells whose film reaches `t_couple`.
inline double coupling_quality(const SkinField& world, const Rect& footprint, double t_couple) {
    const CellSpan cols = world.columns(footprint.x_min, footprint.x_max);
    const CellSpan rows = world.rows(footprint.y_min, footprint.y_max);
    const std::size_t n = cols.size() * rows.size();
    if (n == 0) throw std::domain_error("coupling_quality: footprint covers no cell center");
    std::size_t wet = 0;
    for (std::size_t j = rows.begin; j < rows.end; ++j)
        for (std::size_t i = cols.begin; i < cols.end; ++i) wet += world.thickness(i, j) >= t_couple;
    return static_cast<double>(wet) / static_cast<double>(n);
}

struct RenderParams {
    double mm_per_px = 0.5;
    double noise_sigma = 8.0;
    /// Film thickness at which the gel appearance saturates, mm.
    double t_sat = 1.0;
    /// Reflectance of a saturated gel film.
    double gel_gain = 0.95;
};

/// Camera image of `view`: each pixel blends the skin albedo toward gel_gain by the
/// saturation-normalized film under its center, plus Gaussian noise.
inline Frame render_frame(const SkinField& world, const Rect& view, const RenderParams& p, std::mt19937_64& rng,
                          std::uint64_t frame_id = 0, double sim_time = 0.0) {
    if (!(p.mm_per_px > 0.0) || !(p.t_sat > 0.0)) throw std::invalid_argument("render_frame: bad parameters");
    Frame f;
    f.mm_per_px = p.mm_per_px;
    f.origin_x = view.x_min;
    f.origin_y = view.y_min;
    f.width = static_cast<std::size_t>(std::max(0L, std::lround(view.width() / p.mm_per_px)));
    f.height = static_cast<std::size_t>(std::max(0L, std::lround(view.height() / p.mm_per_px)));
    f.frame_id = frame_id;
    f.sim_time = sim_time;
    f.intensity.resize(f.width * f.height);

    std::normal_distribution<double> noise(0.0, p.noise_sigma > 0.0 ? p.noise_sigma : 1.0);
    const double cs = world.cell_size();
    for (std::size_t r = 0; r < f.height; ++r) {
        const double y = f.origin_y + (r + 0.5) * p.mm_per_px;
        const auto j = std::min(world.ny() - 1, static_cast<std::size_t>(std::max(0.0, y / cs)));
        for (std::size_t c = 0; c < f.width; ++c) {
            const double x = f.origin_x + (c + 0.5) * p.mm_per_px;
            const auto i = std::min(world.nx() - 1, static_cast<std::size_t>(std::max(0.0, x / cs)));
            const double g = std::min(world.thickness(i, j), p.t_sat) / p.t_sat;
            double v = 255.0 * (world.albedo(i, j) * (1.0 - g) + g * p.gel_gain);
            if (p.noise_sigma > 0.0) v += noise(rng);
            f.intensity[r * f.width + c] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
        }
    }
    return f;
}

}  // namespace gelbot
