#include "rf/geometry.hpp"

#include <algorithm>
#include <limits>

namespace rf::geom {

double wrap_angle(double theta) {
  constexpr double kTwoPi = 2.0 * M_PI;
  double t = std::fmod(theta, kTwoPi);
  if (t <= -M_PI) t += kTwoPi;
  if (t > M_PI) t -= kTwoPi;
  return t;
}

double angle_diff(double a, double b) { return std::fabs(wrap_angle(a - b)); }

std::array<Vec2, 4> Obb::corners() const {
  const Vec2 u = Vec2{std::cos(heading), std::sin(heading)} * (0.5 * length);
  const Vec2 v = Vec2{-std::sin(heading), std::cos(heading)} * (0.5 * width);
  return {center + u + v, center + u - v, center - u - v, center - u + v};
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.norm2();
  if (len2 == 0.0) return (p - a).norm();
  double t = (p - a).dot(ab) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

double segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1) {
  // Proper intersection means zero distance.
  const auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return (q - p).cross(r - p);
  };
  const double o1 = orient(a0, a1, b0), o2 = orient(a0, a1, b1);
  const double o3 = orient(b0, b1, a0), o4 = orient(b0, b1, a1);
  if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0))) return 0.0;
  double d = point_segment_distance(b0, a0, a1);
  d = std::min(d, point_segment_distance(b1, a0, a1));
  d = std::min(d, point_segment_distance(a0, b0, b1));
  d = std::min(d, point_segment_distance(a1, b0, b1));
  return d;
}

double point_obb_sdf(const Vec2& p, const Obb& box) {
  // Transform into the box frame; exact SDF of an axis-aligned rectangle.
  const Vec2 local = (p - box.center).rotated(-box.heading);
  const double dx = std::fabs(local.x) - 0.5 * box.length;
  const double dy = std::fabs(local.y) - 0.5 * box.width;
  if (dx > 0.0 || dy > 0.0) {
    const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
    return std::hypot(ox, oy);
  }
  return std::max(dx, dy);  // both negative: inside
}

bool obb_overlap(const Obb& a, const Obb& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const Vec2 axes[4] = {
      Vec2{std::cos(a.heading), std::sin(a.heading)},
      Vec2{-std::sin(a.heading), std::cos(a.heading)},
      Vec2{std::cos(b.heading), std::sin(b.heading)},
      Vec2{-std::sin(b.heading), std::cos(b.heading)},
  };
  for (const Vec2& axis : axes) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = amax;
    for (const Vec2& c : ca) {
      const double s = c.dot(axis);
      amin = std::min(amin, s);
      amax = std::max(amax, s);
    }
    for (const Vec2& c : cb) {
      const double s = c.dot(axis);
      bmin = std::min(bmin, s);
      bmax = std::max(bmax, s);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

double obb_clearance(const Obb& a, const Obb& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  if (!obb_overlap(a, b)) {
    double d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        d = std::min(d, segment_distance(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]));
      }
    }
    return d;
  }
  // Overlapping: deepest boundary-point penetration, i.e. the minimum of
  // the rectangle SDF over the other box's boundary. Restricted to one
  // edge the inside SDF is the max of four linear functions of the edge
  // parameter, so the exact minimum lies at an endpoint or at a crossing
  // of two of those lines.
  const auto edge_min = [](const Vec2& p0, const Vec2& p1, const Obb& box) {
    const Vec2 l0 = (p0 - box.center).rotated(-box.heading);
    const Vec2 l1 = (p1 - box.center).rotated(-box.heading);
    const double hl = 0.5 * box.length, hw = 0.5 * box.width;
    // g_i(t) = c_i + d_i * t for the four face half-planes.
    const double c[4] = {l0.x - hl, -l0.x - hl, l0.y - hw, -l0.y - hw};
    const double d[4] = {l1.x - l0.x, -(l1.x - l0.x), l1.y - l0.y, -(l1.y - l0.y)};
    const auto g = [&](double t) {
      double v = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < 4; ++i) v = std::max(v, c[i] + d[i] * t);
      return v;
    };
    double best = std::min(g(0.0), g(1.0));
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) {
        const double dd = d[i] - d[j];
        if (dd == 0.0) continue;
        const double t = (c[j] - c[i]) / dd;
        if (t > 0.0 && t < 1.0) best = std::min(best, g(t));
      }
    }
    return best;
  };
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) {
    worst = std::min(worst, edge_min(ca[i], ca[(i + 1) % 4], b));
    worst = std::min(worst, edge_min(cb[i], cb[(i + 1) % 4], a));
  }
  return worst;
}

double point_polygon_sdf(const Vec2& p, const std::vector<Vec2>& poly) {
  const std::size_t n = poly.size();
  double dist = std::numeric_limits<double>::infinity();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[j];
    const Vec2& b = poly[i];
    dist = std::min(dist, point_segment_distance(p, a, b));
    // Even-odd ray crossing.
    if ((b.y > p.y) != (a.y > p.y)) {
      const double xint = b.x + (p.y - b.y) * (a.x - b.x) / (a.y - b.y);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside ? dist : -dist;
}

std::vector<double> cumulative_arclength(const std::vector<Vec2>& pts) {
  std::vector<double> s(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    s[i] = s[i - 1] + (pts[i] - pts[i - 1]).norm();
  }
  return s;
}

PolylineProjection project_to_polyline(const Vec2& p, const std::vector<Vec2>& pts,
                                       const std::vector<double>& arclen) {
  PolylineProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  if (pts.size() == 1) {
    best.arclength = 0.0;
    best.distance = (p - pts[0]).norm();
    best.lateral = best.distance;
    best.tangent = 0.0;
    return best;
  }
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const Vec2 a = pts[i], b = pts[i + 1];
    const Vec2 ab = b - a;
    const double len2 = ab.norm2();
    if (len2 == 0.0) continue;
    double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    const Vec2 q = a + ab * t;
    const double d = (p - q).norm();
    if (d < best.distance) {
      best.distance = d;
      best.arclength = arclen[i] + t * std::sqrt(len2);
      best.tangent = std::atan2(ab.y, ab.x);
      const double side = ab.cross(p - a);
      best.lateral = (side >= 0.0 ? d : -d);
    }
  }
  return best;
}

Vec2 point_at_arclength(const std::vector<Vec2>& pts, const std::vector<double>& arclen,
                        double s) {
  if (pts.empty()) return {};
  if (s <= arclen.front()) return pts.front();
  if (s >= arclen.back()) return pts.back();
  const auto it = std::upper_bound(arclen.begin(), arclen.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - arclen.begin());
  const double seg = arclen[i] - arclen[i - 1];
  const double t = seg > 0.0 ? (s - arclen[i - 1]) / seg : 0.0;
  return pts[i - 1] + (pts[i] - pts[i - 1]) * t;
}

double tangent_at_arclength(const std::vector<Vec2>& pts, const std::vector<double>& arclen,
                            double s) {
  if (pts.size() < 2) return 0.0;
  std::size_t i = 1;
  if (s >= arclen.back()) {
    i = pts.size() - 1;
  } else if (s > arclen.front()) {
    i = static_cast<std::size_t>(std::upper_bound(arclen.begin(), arclen.end(), s) -
                                 arclen.begin());
  }
  const Vec2 d = pts[i] - pts[i - 1];
  return std::atan2(d.y, d.x);
}

}  // namespace rf::geom
