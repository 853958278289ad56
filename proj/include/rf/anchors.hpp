// Candidate future generation: a lattice of terminal specs along the
// route, connected to the current ego state by quintic splines in the
// flat outputs of the bicycle model.
#pragma once

#include "rf/scene.hpp"

namespace rf::anchors {

struct TerminalSpec {
  double arclength{0.0};       // target progress along the reference, m
  double lateral_offset{0.0};  // signed offset from the reference, m
  double speed{0.0};           // target speed, m/s
};

inline bool operator==(const TerminalSpec& a, const TerminalSpec& b) {
  return a.arclength == b.arclength && a.lateral_offset == b.lateral_offset &&
         a.speed == b.speed;
}

struct BicycleLimits {
  double max_accel{3.0};      // m/s^2
  double max_decel{5.0};      // m/s^2
  double max_curvature{0.3};  // 1/m
  double max_speed{20.0};     // m/s
};

struct AnchorSet {
  std::vector<Trajectory> anchors;      // exactly K, each length F
  std::vector<TerminalSpec> terminal_specs;
  int K{0};
  bool route_clamped{false};  // set when the route was too short for the lattice
};

/// Quintic polynomial on [0, T] with prescribed endpoint position,
/// velocity, and acceleration.
struct Quintic {
  double c[6]{};
  static Quintic boundary(double p0, double v0, double a0, double p1, double v1,
                          double a1, double T);
  double value(double t) const;
  double deriv(double t) const;
  double deriv2(double t) const;
};

/// Deterministic lattice of terminal specs: speeds {0, 0.5, 1.0, 1.25} x
/// base_speed (floored at 0), lateral offsets {-3, -1.5, 0, 1.5, 3} m,
/// arclength factors {0.6, 1.0} of nominal progress; deduplicated,
/// center-out ordered, truncated or densified to exactly K entries.
std::vector<TerminalSpec> lattice_spec(int K, double base_speed, double horizon_s = 3.0);

/// K dynamically feasible anchors for a scene. Deterministic. Anchor 0
/// is the stay-course candidate (nominal progress, zero offset, current
/// speed). In prediction mode (scene without a route) the nearest lane
/// centerline is used as the spline reference.
AnchorSet generate_anchors(const Scene& scene, int K, const BicycleLimits& limits,
                           double dt = 0.5, int F = 6);

}  // namespace rf::anchors
