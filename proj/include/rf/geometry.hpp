// Planar geometry primitives shared across the planner stack:
// 2-vectors, polylines with arclength, oriented rectangles, and
// signed distances to polygonal drivable regions.
#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace rf::geom {

struct Vec2 {
  double x{0.0};
  double y{0.0};

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double norm2() const { return x * x + y * y; }
  Vec2 rotated(double theta) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * x - s * y, s * x + c * y};
  }
  Vec2 perp() const { return {-y, x}; }
};

inline bool operator==(const Vec2& a, const Vec2& b) { return a.x == b.x && a.y == b.y; }

/// Wrap an angle into (-pi, pi].
double wrap_angle(double theta);

/// Shortest absolute difference between two angles.
double angle_diff(double a, double b);

/// Oriented rectangle (vehicle footprint). `center` is the geometric
/// center, `heading` the long-axis direction.
struct Obb {
  Vec2 center;
  double heading{0.0};
  double length{1.0};
  double width{1.0};

  std::array<Vec2, 4> corners() const;
};

/// Signed clearance between two oriented rectangles: the minimum over
/// the boundary of either rectangle of the signed distance to the other.
/// Positive when disjoint (equals the Euclidean gap), negative when
/// overlapping (deepest boundary-point penetration).
double obb_clearance(const Obb& a, const Obb& b);

/// True when the rectangles overlap (separating-axis test).
bool obb_overlap(const Obb& a, const Obb& b);

/// Signed distance from a point to a convex oriented rectangle
/// (negative inside).
double point_obb_sdf(const Vec2& p, const Obb& box);

/// Distance between two segments [a0,a1] and [b0,b1].
double segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1);

/// Distance from point p to segment [a,b].
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);

/// Signed distance from p to a simple polygon (implicitly closed),
/// positive inside.
double point_polygon_sdf(const Vec2& p, const std::vector<Vec2>& poly);

/// Cumulative arclength of a polyline, starting at 0.
std::vector<double> cumulative_arclength(const std::vector<Vec2>& pts);

/// Projection of a point onto a polyline.
struct PolylineProjection {
  double arclength{0.0};   // arclength of the closest point
  double lateral{0.0};     // signed lateral offset (+ left of travel direction)
  double tangent{0.0};     // heading of the polyline at the closest point
  double distance{0.0};    // unsigned distance to the polyline
};
PolylineProjection project_to_polyline(const Vec2& p, const std::vector<Vec2>& pts,
                                       const std::vector<double>& arclen);

/// Point at a given arclength along a polyline (clamped to the ends).
Vec2 point_at_arclength(const std::vector<Vec2>& pts, const std::vector<double>& arclen,
                        double s);

/// Tangent heading at a given arclength (clamped).
double tangent_at_arclength(const std::vector<Vec2>& pts, const std::vector<double>& arclen,
                            double s);

}  // namespace rf::geom
