#include "rf/scene.hpp"

#include <cmath>

namespace rf {

geom::Obb ego_footprint(const Vec2& position, double heading) {
  return geom::Obb{position, heading, kEgoLength, kEgoWidth};
}

geom::Obb agent_footprint(const AgentState& a) {
  return geom::Obb{a.position, a.heading, a.length, a.width};
}

namespace {

void check_finite(const Vec2& p, const std::string& field) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    throw InvariantError("non-finite coordinate in " + field);
  }
}

void check_ego_state(const EgoState& s, const std::string& field) {
  check_finite(s.position, field);
  if (s.speed < 0.0) throw InvariantError(field + ": speed must be >= 0");
  if (s.heading <= -M_PI - 1e-12 || s.heading > M_PI + 1e-12) {
    throw InvariantError(field + ": heading outside (-pi, pi]");
  }
  if (s.timestamp_index < 0) throw InvariantError(field + ": negative timestamp_index");
}

}  // namespace

void validate_scene(const Scene& scene, const DatasetMeta& meta) {
  const std::size_t hist_len = static_cast<std::size_t>(meta.H) + 1;
  if (scene.ego_history.size() != hist_len) {
    throw InvariantError("scene " + scene.scene_id + ": ego_history length " +
                         std::to_string(scene.ego_history.size()) + " != H+1 (" +
                         std::to_string(hist_len) + ")");
  }
  for (const auto& s : scene.ego_history) check_ego_state(s, "ego_history");
  if (!scene.ego_future.empty() &&
      scene.ego_future.size() != static_cast<std::size_t>(meta.F)) {
    throw InvariantError("scene " + scene.scene_id + ": ego_future length " +
                         std::to_string(scene.ego_future.size()) + " != F (" +
                         std::to_string(meta.F) + ")");
  }
  for (const auto& s : scene.ego_future) check_ego_state(s, "ego_future");
  // Time alignment: every history indexes the same timestamps.
  for (std::size_t a = 0; a < scene.agent_histories.size(); ++a) {
    const auto& hist = scene.agent_histories[a];
    if (hist.size() != hist_len) {
      throw InvariantError("scene " + scene.scene_id + ": agent_histories[" +
                           std::to_string(a) + "] length != H+1");
    }
    for (const auto& s : hist) {
      check_finite(s.position, "agent_histories");
      if (s.length <= 0.0 || s.width <= 0.0) {
        throw InvariantError("agent footprint dimensions must be positive");
      }
      if (s.speed < 0.0) throw InvariantError("agent speed must be >= 0");
    }
  }
  if (!scene.agent_futures.empty()) {
    if (scene.agent_futures.size() != scene.agent_histories.size()) {
      throw InvariantError("scene " + scene.scene_id +
                           ": agent_futures count != agent_histories count");
    }
    for (const auto& traj : scene.agent_futures) {
      if (traj.size() != static_cast<std::size_t>(meta.F)) {
        throw InvariantError("scene " + scene.scene_id + ": agent future length != F");
      }
      for (const auto& s : traj) {
        check_finite(s.position, "agent_futures");
        if (s.length <= 0.0 || s.width <= 0.0) {
          throw InvariantError("agent footprint dimensions must be positive");
        }
      }
    }
  }
  for (std::size_t t = 0; t < hist_len; ++t) {
    const int stamp = scene.ego_history[t].timestamp_index;
    if (t > 0 && stamp != scene.ego_history[t - 1].timestamp_index + 1) {
      throw InvariantError("ego_history timestamps not consecutive");
    }
  }
  for (const auto& el : scene.map) {
    if (el.points.size() < 2) throw InvariantError("map element with < 2 points");
    for (std::size_t i = 1; i < el.points.size(); ++i) {
      if (el.points[i] == el.points[i - 1]) {
        throw InvariantError("map element with repeated consecutive points");
      }
    }
  }
  if (scene.route) {
    const auto& r = *scene.route;
    if (r.polyline.empty()) throw InvariantError("route polyline empty");
    if (r.cumulative_arclength.size() != r.polyline.size()) {
      throw InvariantError("route arclength length mismatch");
    }
    for (std::size_t i = 1; i < r.cumulative_arclength.size(); ++i) {
      if (r.cumulative_arclength[i] <= r.cumulative_arclength[i - 1]) {
        throw InvariantError("route arclength not strictly increasing");
      }
    }
  }
}

void validate_dataset(const Dataset& dataset) {
  if (dataset.meta.dt <= 0.0) throw InvariantError("dt must be positive");
  if (dataset.meta.H < 1 || dataset.meta.F < 1) throw InvariantError("H and F must be >= 1");
  for (const auto& scene : dataset.scenes) validate_scene(scene, dataset.meta);
}

Kinematics derive_kinematics(const std::vector<Vec2>& positions, double dt,
                             double initial_heading) {
  if (positions.size() < 2) throw InvariantError("derive_kinematics needs >= 2 positions");
  if (dt <= 0.0) throw InvariantError("derive_kinematics: dt must be positive");
  const std::size_t n = positions.size();
  Kinematics out;
  out.headings.resize(n);
  out.speeds.resize(n);
  double prev_heading = initial_heading;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec2 d = positions[i + 1] - positions[i];
    const double dist = d.norm();
    out.speeds[i] = dist / dt;
    if (dist < 1e-6) {
      out.headings[i] = prev_heading;
    } else {
      out.headings[i] = std::atan2(d.y, d.x);
      prev_heading = out.headings[i];
    }
  }
  out.speeds[n - 1] = out.speeds[n - 2];
  out.headings[n - 1] = out.headings[n - 2];
  return out;
}

Trajectory make_trajectory(const std::vector<Vec2>& positions, double dt,
                           TrajectorySource source, double initial_heading,
                           int first_timestamp) {
  const Kinematics kin = derive_kinematics(positions, dt, initial_heading);
  Trajectory traj;
  traj.source = source;
  traj.states.resize(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    traj.states[i] = EgoState{positions[i], geom::wrap_angle(kin.headings[i]),
                              kin.speeds[i], first_timestamp + static_cast<int>(i)};
  }
  return traj;
}

Trajectory ground_truth_trajectory(const Scene& scene) {
  if (scene.ego_future.empty()) {
    throw InvariantError("scene " + scene.scene_id + " has no ego_future label");
  }
  Trajectory traj;
  traj.source = TrajectorySource::kGroundTruth;
  traj.states = scene.ego_future;
  return traj;
}

RoutePlan make_route(std::vector<Vec2> polyline) {
  RoutePlan r;
  r.cumulative_arclength = geom::cumulative_arclength(polyline);
  r.polyline = std::move(polyline);
  // Collapse zero-length segments so arclength is strictly increasing.
  if (r.polyline.size() > 1) {
    std::vector<Vec2> pts;
    std::vector<double> arc;
    pts.push_back(r.polyline[0]);
    arc.push_back(0.0);
    for (std::size_t i = 1; i < r.polyline.size(); ++i) {
      if (r.cumulative_arclength[i] > arc.back()) {
        pts.push_back(r.polyline[i]);
        arc.push_back(r.cumulative_arclength[i]);
      }
    }
    r.polyline = std::move(pts);
    r.cumulative_arclength = std::move(arc);
  }
  return r;
}

}  // namespace rf
