// Rule-hierarchy planner: lane-graph route search, constant-velocity
// agent prediction, anchor scoring under the hierarchy, and the
// reward-to-Dirichlet-prior conversion.
#pragma once

#include "rf/anchors.hpp"
#include "rf/rules.hpp"

namespace rf::rh {

inline constexpr double kAlphaFloor = 1e-6;

struct BoltzmannConfig {
  double zeta{1.0};  // temperature, reward units, > 0
};

struct DirichletBelief {
  std::vector<double> concentration;  // every entry > 0
  double total{0.0};                  // sum of concentration
};

DirichletBelief make_belief(std::vector<double> concentration);

/// Reference polyline from the lane graph: nearest-to-goal lane searched
/// backward to the ego's lane, centerlines concatenated. Agents are never
/// consulted. When no connected path exists, the ego's current lane is
/// extended straight ahead and *degraded is set.
RoutePlan plan_route(const Scene& scene, const Vec2& goal, bool* degraded = nullptr);

/// Constant-velocity extrapolation of every agent for F steps.
std::vector<Trajectory> predict_agents_cv(const Scene& scene, int F, double dt);

/// Softmax of rewards / zeta with max-subtraction.
std::vector<double> boltzmann_distribution(const std::vector<double>& rewards,
                                           const BoltzmannConfig& config);

/// Dirichlet prior: N_prior * boltzmann(rewards) + alpha_floor.
/// Rewards come from evaluating every anchor under the hierarchy with
/// constant-velocity agent futures.
DirichletBelief compute_prior(const anchors::AnchorSet& anchor_set, const Scene& scene,
                              const rules::RuleHierarchy& hierarchy,
                              const rules::RuleParams& rule_params,
                              const BoltzmannConfig& config, double n_prior,
                              double dt = 0.5);

/// Per-anchor rewards under the hierarchy (exposed for diagnostics).
std::vector<double> anchor_rewards(const anchors::AnchorSet& anchor_set,
                                   const Scene& scene,
                                   const rules::RuleHierarchy& hierarchy,
                                   const rules::RuleParams& rule_params,
                                   double dt = 0.5);

/// Argmax of the prior concentration; ties break to the lowest index.
int rh_plan(const DirichletBelief& prior);

}  // namespace rf::rh
