// Synthetic scene generation: scripted lane-following traffic on three
// road templates, with a driving-side switch realized as an exact mirror
// of the canonical right-side geometry and flow.
#pragma once

#include <cstdint>

#include "rf/scene.hpp"

namespace rf::gen {

enum class DrivingSide { kRight, kLeft };

struct RoadKindWeights {
  double straight{0.6};
  double curve{0.3};
  double intersection{0.1};
};

struct GenConfig {
  int n_scenes{100};
  DrivingSide driving_side{DrivingSide::kRight};
  double mean_agent_density{3.0};  // agents per scene
  RoadKindWeights road_kinds;
  double speed_noise{0.5};    // m/s jitter on scripted base speeds
  double lateral_noise{0.1};  // m jitter around the lane centerline
  std::uint64_t seed{0};
  int H{4};
  int F{6};
  double dt{0.5};

  void validate() const;  // weights sum to 1, densities within road capacity
};

/// Deterministic under (config, seed). Ground-truth futures continue the
/// behavior scripts; every generated ego future stays on the road.
Dataset generate_scenes(const GenConfig& config);

/// Reflection about the road axis (y -> -y, heading -> -heading),
/// applied to every state, map element, route point, and label.
Scene mirror_scene(const Scene& scene);

/// Scripted rear-gap fixture: a lead vehicle ahead of the ego brakes to a
/// stop inside the horizon while the ego's ground truth also brakes. A
/// constant-velocity prediction of the lead overshoots its true stopping
/// point, making fast candidates look collision-free to rule checks.
Scene decel_lead_scene(std::uint64_t seed, int H = 4, int F = 6, double dt = 0.5);

/// A dataset of rear-gap fixtures with varied gaps and speeds.
Dataset generate_decel_lead(int n_scenes, std::uint64_t seed, int H = 4, int F = 6,
                            double dt = 0.5);

}  // namespace rf::gen
