#include "rf/rh_planner.hpp"

#include <algorithm>
#include <cmath>

namespace rf::rh {

DirichletBelief make_belief(std::vector<double> concentration) {
  DirichletBelief b;
  double total = 0.0;
  for (double c : concentration) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw InvariantError("Dirichlet concentration entries must be positive and finite");
    }
    total += c;
  }
  b.concentration = std::move(concentration);
  b.total = total;
  return b;
}

namespace {

struct Lane {
  const MapElement* element{nullptr};
  std::vector<double> arclen;
  std::vector<int> predecessors;  // lanes whose end connects to this lane's start
};

constexpr double kJunctionTol = 0.5;  // m, endpoint snap distance

std::vector<Lane> build_lane_graph(const Scene& scene) {
  std::vector<Lane> lanes;
  for (const auto& el : scene.map) {
    if (el.kind != MapKind::kLaneCenterline) continue;
    Lane lane;
    lane.element = &el;
    lane.arclen = geom::cumulative_arclength(el.points);
    lanes.push_back(std::move(lane));
  }
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    for (std::size_t j = 0; j < lanes.size(); ++j) {
      if (i == j) continue;
      const Vec2 end_i = lanes[i].element->points.back();
      const Vec2 start_j = lanes[j].element->points.front();
      if ((end_i - start_j).norm() < kJunctionTol) {
        lanes[j].predecessors.push_back(static_cast<int>(i));
      }
    }
  }
  return lanes;
}

int nearest_lane_index(const std::vector<Lane>& lanes, const Vec2& p) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const double d =
        geom::project_to_polyline(p, lanes[i].element->points, lanes[i].arclen).distance;
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

/// Backward DFS from the goal lane over predecessors, keeping the
/// shortest simple path that reaches the ego lane (lexicographic
/// tie-break on lane indices).
void dfs_paths(const std::vector<Lane>& lanes, int current, int target,
               std::vector<int>& stack, std::vector<bool>& visited,
               std::vector<int>& best) {
  if (!best.empty() && stack.size() >= best.size()) return;  // cannot improve
  if (current == target) {
    std::vector<int> path(stack.rbegin(), stack.rend());
    if (best.empty() || path.size() < best.size() ||
        (path.size() == best.size() && path < best)) {
      best = std::move(path);
    }
    return;
  }
  for (int pred : lanes[static_cast<std::size_t>(current)].predecessors) {
    if (visited[static_cast<std::size_t>(pred)]) continue;
    visited[static_cast<std::size_t>(pred)] = true;
    stack.push_back(pred);
    dfs_paths(lanes, pred, target, stack, visited, best);
    stack.pop_back();
    visited[static_cast<std::size_t>(pred)] = false;
  }
}

RoutePlan concatenate_lanes(const std::vector<Lane>& lanes, const std::vector<int>& path) {
  std::vector<Vec2> pts;
  for (int idx : path) {
    for (const Vec2& p : lanes[static_cast<std::size_t>(idx)].element->points) {
      if (!pts.empty() && (p - pts.back()).norm() < 1e-9) continue;
      pts.push_back(p);
    }
  }
  return make_route(std::move(pts));
}

RoutePlan extended_current_lane(const std::vector<Lane>& lanes, int ego_lane) {
  const auto& src = lanes[static_cast<std::size_t>(ego_lane)].element->points;
  std::vector<Vec2> pts = src;
  const Vec2 tail = pts.back() - pts[pts.size() - 2];
  const double len = tail.norm();
  if (len > 0.0) {
    const Vec2 dir = tail * (1.0 / len);
    pts.push_back(pts.back() + dir * 50.0);
  }
  return make_route(std::move(pts));
}

}  // namespace

RoutePlan plan_route(const Scene& scene, const Vec2& goal, bool* degraded) {
  if (degraded != nullptr) *degraded = false;
  if ((goal - scene.current_ego().position).norm() > 1000.0) {
    throw InvariantError("plan_route: goal more than 1 km from ego");
  }
  const std::vector<Lane> lanes = build_lane_graph(scene);
  if (lanes.empty()) throw InvariantError("plan_route: no lane centerlines in map");
  const int ego_lane = nearest_lane_index(lanes, scene.current_ego().position);
  const int goal_lane = nearest_lane_index(lanes, goal);
  std::vector<int> stack{goal_lane};
  std::vector<bool> visited(lanes.size(), false);
  visited[static_cast<std::size_t>(goal_lane)] = true;
  std::vector<int> best;
  dfs_paths(lanes, goal_lane, ego_lane, stack, visited, best);
  if (best.empty()) {
    if (degraded != nullptr) *degraded = true;
    return extended_current_lane(lanes, ego_lane);
  }
  return concatenate_lanes(lanes, best);
}

std::vector<Trajectory> predict_agents_cv(const Scene& scene, int F, double dt) {
  std::vector<Trajectory> out;
  out.reserve(scene.agent_histories.size());
  for (const auto& hist : scene.agent_histories) {
    if (hist.empty()) throw InvariantError("predict_agents_cv: agent with empty history");
    const AgentState& last = hist.back();
    const Vec2 vel{last.speed * std::cos(last.heading), last.speed * std::sin(last.heading)};
    Trajectory traj;
    traj.source = TrajectorySource::kAnchor;
    const int t0 = scene.current_ego().timestamp_index;
    for (int i = 1; i <= F; ++i) {
      traj.states.push_back(EgoState{last.position + vel * (dt * i), last.heading,
                                     last.speed, t0 + i});
    }
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<double> boltzmann_distribution(const std::vector<double>& rewards,
                                           const BoltzmannConfig& config) {
  if (rewards.empty()) throw InvariantError("boltzmann_distribution: empty rewards");
  if (!(config.zeta > 0.0)) throw InvariantError("Boltzmann temperature must be positive");
  double max_r = -std::numeric_limits<double>::infinity();
  for (double r : rewards) {
    if (!std::isfinite(r)) throw InvariantError("boltzmann_distribution: non-finite reward");
    max_r = std::max(max_r, r);
  }
  std::vector<double> p(rewards.size());
  double z = 0.0;
  for (std::size_t k = 0; k < rewards.size(); ++k) {
    p[k] = std::exp((rewards[k] - max_r) / config.zeta);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> anchor_rewards(const anchors::AnchorSet& anchor_set,
                                   const Scene& scene,
                                   const rules::RuleHierarchy& hierarchy,
                                   const rules::RuleParams& rule_params, double dt) {
  const int F = anchor_set.anchors.empty()
                    ? 0
                    : static_cast<int>(anchor_set.anchors.front().states.size());
  const auto predicted = predict_agents_cv(scene, F, dt);
  std::vector<double> rewards;
  rewards.reserve(anchor_set.anchors.size());
  for (const auto& anchor : anchor_set.anchors) {
    rewards.push_back(
        rules::evaluate_rules(anchor, scene, predicted, hierarchy, rule_params).reward);
  }
  return rewards;
}

DirichletBelief compute_prior(const anchors::AnchorSet& anchor_set, const Scene& scene,
                              const rules::RuleHierarchy& hierarchy,
                              const rules::RuleParams& rule_params,
                              const BoltzmannConfig& config, double n_prior, double dt) {
  if (n_prior < 0.0) throw InvariantError("compute_prior: N_prior must be >= 0");
  const auto rewards = anchor_rewards(anchor_set, scene, hierarchy, rule_params, dt);
  const auto p = boltzmann_distribution(rewards, config);
  std::vector<double> conc(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) conc[k] = n_prior * p[k] + kAlphaFloor;
  return make_belief(std::move(conc));
}

int rh_plan(const DirichletBelief& prior) {
  if (prior.concentration.empty()) throw InvariantError("rh_plan: empty prior");
  int best = 0;
  for (std::size_t k = 1; k < prior.concentration.size(); ++k) {
    if (prior.concentration[k] > prior.concentration[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace rf::rh
