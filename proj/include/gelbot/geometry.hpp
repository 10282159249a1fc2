#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>

namespace gelbot {

/// Axis-aligned rectangle in skin-plane millimeters. x is the scan axis, y is lateral.
struct Rect {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    constexpr double width() const { return x_max - x_min; }
    constexpr double height() const { return y_max - y_min; }
    constexpr double area() const { return width() * height(); }
    constexpr bool valid() const { return x_min <= x_max && y_min <= y_max; }

    constexpr bool contains(double x, double y) const {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }

    constexpr bool contains(const Rect& other) const {
        return other.x_min >= x_min && other.x_max <= x_max && other.y_min >= y_min && other.y_max <= y_max;
    }

    constexpr Rect translated(double dx, double dy) const {
        return {x_min + dx, y_min + dy, x_max + dx, y_max + dy};
    }

    friend constexpr bool operator==(const Rect&, const Rect&) = default;
};

/// A rect or the explicit empty marker.
using MaybeRect = std::optional<Rect>;

/// Scan direction along the x axis.
enum class Direction : int { Forward = 1, Backward = -1 };

constexpr int sign(Direction d) { return static_cast<int>(d); }

/// Largest rect contained in both; empty unless the interiors overlap.
constexpr MaybeRect intersect(const Rect& a, const Rect& b) {
    const Rect r{std::max(a.x_min, b.x_min), std::max(a.y_min, b.y_min), std::min(a.x_max, b.x_max),
                 std::min(a.y_max, b.y_max)};
    if (r.x_min >= r.x_max || r.y_min >= r.y_max) return std::nullopt;
    return r;
}

constexpr double intersection_area(const Rect& a, const Rect& b) {
    const auto r = intersect(a, b);
    return r ? r->area() : 0.0;
}

/// Intersection over union. Two zero-area rects score 0.
constexpr double iou(const Rect& a, const Rect& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

/// Fraction of `region` covered by `gel`; throws std::domain_error for a zero-area region.
inline double coverage(const MaybeRect& gel, const Rect& region) {
    if (!(region.area() > 0.0)) throw std::domain_error("coverage: region has zero area");
    if (!gel) return 0.0;
    return std::clamp(intersection_area(*gel, region) / region.area(), 0.0, 1.0);
}

/// Window of length `window_len` immediately behind `footprint` (opposite to `dir`),
/// with the footprint's lateral extent, clipped to `bounds`.
inline MaybeRect trail_region(const Rect& footprint, Direction dir, double window_len, const Rect& bounds) {
    if (!(window_len > 0.0)) throw std::invalid_argument("trail_region: window_len must be positive");
    Rect window = footprint;
    if (dir == Direction::Forward) {
        window.x_max = footprint.x_min;
        window.x_min = footprint.x_min - window_len;
    } else {
        window.x_min = footprint.x_max;
        window.x_max = footprint.x_max + window_len;
    }
    return intersect(window, bounds);
}

}  // namespace gelbot
