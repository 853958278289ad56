#include "rf/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace rf::anchors {

using geom::Vec2;

Quintic Quintic::boundary(double p0, double v0, double a0, double p1, double v1,
                          double a1, double T) {
  Quintic q;
  q.c[0] = p0;
  q.c[1] = v0;
  q.c[2] = 0.5 * a0;
  const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
  const double dp = p1 - p0 - v0 * T - 0.5 * a0 * T2;
  const double dv = v1 - v0 - a0 * T;
  const double da = a1 - a0;
  // Solve the 3x3 boundary system for c3..c5 (Cramer's rule).
  const double m[3][3] = {{T3, T4, T5},
                          {3.0 * T2, 4.0 * T3, 5.0 * T4},
                          {6.0 * T, 12.0 * T2, 20.0 * T3}};
  const double rhs[3] = {dp, dv, da};
  const auto det3 = [](const double a[3][3]) {
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
           a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  };
  const double det = det3(m);
  for (int k = 0; k < 3; ++k) {
    double mk[3][3];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) mk[r][c] = (c == k) ? rhs[r] : m[r][c];
    }
    q.c[3 + k] = det != 0.0 ? det3(mk) / det : 0.0;
  }
  return q;
}

double Quintic::value(double t) const {
  double acc = 0.0;
  for (int i = 5; i >= 0; --i) acc = acc * t + c[i];
  return acc;
}

double Quintic::deriv(double t) const {
  double acc = 0.0;
  for (int i = 5; i >= 1; --i) acc = acc * t + i * c[i];
  return acc;
}

double Quintic::deriv2(double t) const {
  double acc = 0.0;
  for (int i = 5; i >= 2; --i) acc = acc * t + i * (i - 1) * c[i];
  return acc;
}

namespace {

struct SpecLess {
  bool operator()(const TerminalSpec& a, const TerminalSpec& b) const {
    if (a.arclength != b.arclength) return a.arclength < b.arclength;
    if (a.lateral_offset != b.lateral_offset) return a.lateral_offset < b.lateral_offset;
    return a.speed < b.speed;
  }
};

std::vector<TerminalSpec> build_combos(const std::vector<double>& offsets,
                                       double base_speed, double nominal) {
  static const double kSpeedMults[] = {0.0, 0.5, 1.0, 1.25};
  static const double kArcFactors[] = {0.6, 1.0};
  std::set<TerminalSpec, SpecLess> uniq;
  for (double mult : kSpeedMults) {
    for (double off : offsets) {
      for (double fac : kArcFactors) {
        uniq.insert(TerminalSpec{fac * nominal, off, std::max(0.0, mult * base_speed)});
      }
    }
  }
  return {uniq.begin(), uniq.end()};
}

/// Center-out ordering: prefer small lateral offsets, then speeds near the
/// base speed, then nominal progress; ties resolved deterministically.
void center_out_sort(std::vector<TerminalSpec>& specs, double base_speed, double nominal) {
  std::stable_sort(specs.begin(), specs.end(),
                   [&](const TerminalSpec& a, const TerminalSpec& b) {
                     const auto key = [&](const TerminalSpec& s) {
                       return std::tuple(std::fabs(s.lateral_offset),
                                         std::fabs(s.speed - base_speed),
                                         std::fabs(s.arclength - nominal),
                                         s.lateral_offset, s.speed, s.arclength);
                     };
                     return key(a) < key(b);
                   });
}

}  // namespace

std::vector<TerminalSpec> lattice_spec(int K, double base_speed, double horizon_s) {
  if (K < 2) throw InvariantError("lattice_spec requires K >= 2");
  const double nominal = base_speed * horizon_s;
  std::vector<double> offsets = {-3.0, -1.5, 0.0, 1.5, 3.0};
  std::vector<TerminalSpec> specs = build_combos(offsets, base_speed, nominal);
  // Densify lateral offsets by midpoint subdivision until the lattice can
  // cover K entries.
  while (static_cast<int>(specs.size()) < K) {
    std::vector<double> denser;
    denser.push_back(offsets.front());
    for (std::size_t i = 1; i < offsets.size(); ++i) {
      denser.push_back(0.5 * (offsets[i - 1] + offsets[i]));
      denser.push_back(offsets[i]);
    }
    offsets = std::move(denser);
    specs = build_combos(offsets, base_speed, nominal);
  }
  center_out_sort(specs, base_speed, nominal);
  specs.resize(static_cast<std::size_t>(K));
  return specs;
}

namespace {

struct Reference {
  std::vector<Vec2> pts;
  std::vector<double> arclen;
};

Reference reference_polyline(const Scene& scene) {
  if (scene.route) return {scene.route->polyline, scene.route->cumulative_arclength};
  // Prediction mode: nearest lane centerline stands in for the route.
  const Vec2 ego = scene.current_ego().position;
  const MapElement* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& el : scene.map) {
    if (el.kind != MapKind::kLaneCenterline) continue;
    const auto arc = geom::cumulative_arclength(el.points);
    const double d = geom::project_to_polyline(ego, el.points, arc).distance;
    if (d < best_d) {
      best_d = d;
      best = &el;
    }
  }
  if (best == nullptr) {
    throw InvariantError("generate_anchors: scene has neither route nor lane centerline");
  }
  return {best->points, geom::cumulative_arclength(best->points)};
}

struct SplineSample {
  std::vector<Vec2> positions;  // F samples at dt..F*dt
  bool feasible{true};
};

SplineSample sample_spline(const Quintic& qx, const Quintic& qy, int F, double dt,
                           const BicycleLimits& limits, int n_samples) {
  SplineSample out;
  const double T = F * dt;
  const double accel_limit = std::max(limits.max_accel, limits.max_decel);
  for (int i = 1; i <= n_samples; ++i) {
    const double t = T * static_cast<double>(i) / n_samples;
    const double vx = qx.deriv(t), vy = qy.deriv(t);
    const double ax = qx.deriv2(t), ay = qy.deriv2(t);
    const double speed = std::hypot(vx, vy);
    if (speed > limits.max_speed + 1e-9) out.feasible = false;
    if (std::hypot(ax, ay) > accel_limit + 1e-9) out.feasible = false;
    if (speed > 0.1) {
      const double curvature = std::fabs(vx * ay - vy * ax) / (speed * speed * speed);
      if (curvature > limits.max_curvature + 1e-9) out.feasible = false;
    }
  }
  out.positions.reserve(static_cast<std::size_t>(F));
  for (int i = 1; i <= F; ++i) {
    const double t = dt * i;
    out.positions.push_back(Vec2{qx.value(t), qy.value(t)});
  }
  return out;
}

}  // namespace

AnchorSet generate_anchors(const Scene& scene, int K, const BicycleLimits& limits,
                           double dt, int F) {
  if (K < 2) throw InvariantError("generate_anchors requires K >= 2");
  const Reference ref = reference_polyline(scene);
  const EgoState& ego = scene.current_ego();
  const double horizon = F * dt;

  double accel0 = 0.0;
  if (scene.ego_history.size() >= 2) {
    const auto& prev = scene.ego_history[scene.ego_history.size() - 2];
    accel0 = (ego.speed - prev.speed) / dt;
  }

  const auto proj = geom::project_to_polyline(ego.position, ref.pts, ref.arclen);
  const double route_end = ref.arclen.back();

  AnchorSet set;
  set.K = K;

  const TerminalSpec stay{ego.speed * horizon, 0.0, ego.speed};
  std::vector<TerminalSpec> specs;
  specs.reserve(static_cast<std::size_t>(K));
  specs.push_back(stay);
  for (const auto& s : lattice_spec(K, ego.speed, horizon)) {
    if (static_cast<int>(specs.size()) >= K) break;
    if (s == stay) continue;
    specs.push_back(s);
  }
  // Lattice returned K entries of which at most one matched the stay-course
  // spec, so we have exactly K here.

  const Vec2 v0{ego.speed * std::cos(ego.heading), ego.speed * std::sin(ego.heading)};
  const Vec2 a0{accel0 * std::cos(ego.heading), accel0 * std::sin(ego.heading)};

  const auto build = [&](const TerminalSpec& spec) {
    double s1 = proj.arclength + spec.arclength;
    if (s1 > route_end) {
      s1 = route_end;
      set.route_clamped = true;
    }
    const double theta1 = geom::tangent_at_arclength(ref.pts, ref.arclen, s1);
    const Vec2 base = geom::point_at_arclength(ref.pts, ref.arclen, s1);
    const Vec2 normal{-std::sin(theta1), std::cos(theta1)};
    const Vec2 p1 = base + normal * spec.lateral_offset;
    const Vec2 v1{spec.speed * std::cos(theta1), spec.speed * std::sin(theta1)};
    const Quintic qx = Quintic::boundary(ego.position.x, v0.x, a0.x, p1.x, v1.x, 0.0, horizon);
    const Quintic qy = Quintic::boundary(ego.position.y, v0.y, a0.y, p1.y, v1.y, 0.0, horizon);
    return std::pair(qx, qy);
  };

  for (std::size_t idx = 0; idx < specs.size(); ++idx) {
    TerminalSpec spec = specs[idx];
    auto [qx, qy] = build(spec);
    SplineSample sample = sample_spline(qx, qy, F, dt, limits, F);
    if (!sample.feasible && idx > 0) {
      // Swap in the nearest feasible lattice neighbor (spec-space distance).
      std::vector<std::size_t> order(specs.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      const auto dist = [&](const TerminalSpec& s) {
        const double ds = (s.arclength - spec.arclength) / std::max(1.0, stay.arclength);
        const double doff = (s.lateral_offset - spec.lateral_offset) / 3.0;
        const double dv = (s.speed - spec.speed) / std::max(1.0, ego.speed);
        return ds * ds + doff * doff + dv * dv;
      };
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dist(specs[a]) < dist(specs[b]);
      });
      for (std::size_t cand : order) {
        if (cand == idx) continue;
        auto [cx, cy] = build(specs[cand]);
        SplineSample candidate = sample_spline(cx, cy, F, dt, limits, F);
        if (candidate.feasible) {
          spec = specs[cand];
          sample = std::move(candidate);
          break;
        }
      }
    }
    std::vector<Vec2> with_start;
    with_start.reserve(sample.positions.size() + 1);
    with_start.push_back(ego.position);
    with_start.insert(with_start.end(), sample.positions.begin(), sample.positions.end());
    Trajectory traj = make_trajectory(with_start, dt, TrajectorySource::kAnchor,
                                      ego.heading, ego.timestamp_index);
    traj.states.erase(traj.states.begin());  // keep the F future states only
    set.anchors.push_back(std::move(traj));
    set.terminal_specs.push_back(spec);
  }
  return set;
}

}  // namespace rf::anchors
