// Domain types for driving scenes: agent states, map elements, routes,
// trajectories, and datasets. All types are immutable by convention after
// construction and safe to share across threads.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rf/geometry.hpp"

namespace rf {

using geom::Vec2;

/// Raised on invariant violations and malformed inputs.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EgoState {
  Vec2 position;          // meters, scene-local frame
  double heading{0.0};    // radians, in (-pi, pi]
  double speed{0.0};      // m/s, >= 0
  int timestamp_index{0}; // step index, duration dt seconds
};

struct AgentState {
  int agent_id{0};
  Vec2 position;
  double heading{0.0};
  double speed{0.0};
  double length{4.7};  // footprint, meters
  double width{1.9};
};

enum class MapKind { kLaneCenterline, kRoadBoundary, kStopLine };
enum class LightState { kGreen, kRed, kNone };

struct MapElement {
  MapKind kind{MapKind::kLaneCenterline};
  std::vector<Vec2> points;       // >= 2, consecutive points distinct
  double speed_limit{0.0};        // lanes only, m/s
  LightState light{LightState::kNone};
  int red_start{0};               // stop lines only, step indices
  int red_end{0};
};

struct RoutePlan {
  std::vector<Vec2> polyline;
  std::vector<double> cumulative_arclength;  // strictly increasing
};

enum class Regime { kId, kOod, kUnknown };

struct Scene {
  std::vector<EgoState> ego_history;                    // length H+1
  std::vector<std::vector<AgentState>> agent_histories; // per agent, length H+1
  std::vector<MapElement> map;
  std::optional<RoutePlan> route;
  std::vector<EgoState> ego_future;                     // length F, empty at inference
  // Labels for safety metrics: per-agent futures of length F, aligned
  // with agent_histories. Empty when the dataset carries no agent labels.
  std::vector<std::vector<AgentState>> agent_futures;
  std::string scene_id;
  Regime regime_tag{Regime::kUnknown};

  const EgoState& current_ego() const { return ego_history.back(); }
};

enum class TrajectorySource { kAnchor, kRefined, kGroundTruth };

struct Trajectory {
  std::vector<EgoState> states;  // length exactly F
  TrajectorySource source{TrajectorySource::kAnchor};
};

struct DatasetMeta {
  double dt{0.5};
  int H{4};
  int F{6};
  std::uint64_t seed{0};
  std::string regime;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Scene> scenes;
};

/// Default ego footprint.
inline constexpr double kEgoLength = 4.7;
inline constexpr double kEgoWidth = 1.9;

geom::Obb ego_footprint(const Vec2& position, double heading);
geom::Obb agent_footprint(const AgentState& a);

/// Validates one scene against the dataset metadata; throws InvariantError
/// naming the offending field.
void validate_scene(const Scene& scene, const DatasetMeta& meta);

/// Validates every scene plus cross-scene consistency.
void validate_dataset(const Dataset& dataset);

/// Headings and speeds by forward finite differences of positions.
/// speed_i = |p_{i+1}-p_i|/dt (last repeated); heading from the same
/// difference; near-stationary segments (|dp| < 1e-6 m) inherit the
/// previous heading (initial heading for a leading stationary run).
struct Kinematics {
  std::vector<double> headings;
  std::vector<double> speeds;
};
Kinematics derive_kinematics(const std::vector<Vec2>& positions, double dt,
                             double initial_heading = 0.0);

/// Trajectory from bare positions, deriving headings/speeds.
Trajectory make_trajectory(const std::vector<Vec2>& positions, double dt,
                           TrajectorySource source, double initial_heading = 0.0,
                           int first_timestamp = 0);

/// Ground-truth ego future as a Trajectory (requires label present).
Trajectory ground_truth_trajectory(const Scene& scene);

RoutePlan make_route(std::vector<Vec2> polyline);

}  // namespace rf
