#pragma once

#include <cmath>
#include <vector>

namespace no2 {

/// Planar point in projected meters. The tool does no geodesy; inputs are
/// assumed to be pre-projected.
struct Point {
  double x = 0;
  double y = 0;

  bool operator==(const Point&) const = default;
};

inline double distance(Point a, Point b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

inline double polyline_length(const std::vector<Point>& pts) {
  double len = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    len += distance(pts[i - 1], pts[i]);
  return len;
}

/// Point at arc length `s` along the polyline, clamped to the endpoints.
inline Point point_at_arclength(const std::vector<Point>& pts, double s) {
  if (s <= 0) return pts.front();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = distance(pts[i - 1], pts[i]);
    if (s <= seg && seg > 0) {
      const double t = s / seg;
      return {pts[i - 1].x + t * (pts[i].x - pts[i - 1].x),
              pts[i - 1].y + t * (pts[i].y - pts[i - 1].y)};
    }
    s -= seg;
  }
  return pts.back();
}

}  // namespace no2
