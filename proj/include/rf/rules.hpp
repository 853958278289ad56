// The seven-rule traffic hierarchy: robustness evaluation of a candidate
// trajectory against a scene, hierarchy ranks, and the scalar reward.
#pragma once

#include "rf/stl.hpp"

namespace rf::rules {

inline constexpr int kNumRules = 7;
inline constexpr double kDefaultCap = 1e6;

/// Tunable rule parameters; defaults follow the shipped rule config.
struct RuleParams {
  double collision_margin{0.3};   // m
  double d_max{3.5};              // m, allowed lateral deviation from route
  double theta_max{M_PI / 4.0};   // rad, allowed misalignment with route
  double progress_min{0.5};       // m, required final forward progress
  double boundary_inflation{0.0}; // m, drivable-region inflation
  double cap{kDefaultCap};        // stands in for +inf on vacuous rules
  // Robustness scales s_i, most important rule first.
  std::array<double, kNumRules> scales{1.0, 1.0, 5.0, 2.0, 1.0, 1.0, 0.5};
};

struct Rule {
  std::string name;
  stl::StlPtr expr;
  double scale{1.0};
};

struct RuleHierarchy {
  std::vector<Rule> rules;  // most important first, names unique
  int count() const { return static_cast<int>(rules.size()); }
};

struct RobustnessVector {
  std::vector<double> values;  // normalized by the per-rule scale
};

struct HierarchyResult {
  RobustnessVector robustness;
  std::vector<bool> satisfied_mask;  // value > 0
  int rank{1};                       // 1 (all satisfied) .. 2^N (none)
  double reward{0.0};
};

/// The seven-rule hierarchy, most important first, over the signal
/// bundle produced by `evaluate_rules`.
RuleHierarchy default_hierarchy(const RuleParams& params);

/// Per-step signals for one candidate trajectory. Exposed for tests.
stl::SignalBundle rule_signals(const Trajectory& traj, const Scene& scene,
                               const std::vector<Trajectory>& predicted_agents,
                               const RuleParams& params);

HierarchyResult evaluate_rules(const Trajectory& traj, const Scene& scene,
                               const std::vector<Trajectory>& predicted_agents,
                               const RuleHierarchy& hierarchy,
                               const RuleParams& params = RuleParams{});

/// Scalar reward: 2-power weights on the satisfaction mask plus a bounded
/// logistic tie-break, strictly preserving lexicographic rule dominance.
double hierarchy_reward(const std::vector<bool>& mask,
                        const RobustnessVector& robustness);

/// Rank under the mask ordering: 1 plus the integer whose binary digits
/// are the negated mask, most important rule first.
int hierarchy_rank(const std::vector<bool>& mask);

/// 2-rule safety rank: collision avoidance dominates off-road avoidance.
int safety_rank_2rule(bool collision_free, bool on_road);

/// Signed distance of a point into the drivable region (union of road
/// boundary polygons, positive inside).
double drivable_sdf(const Vec2& p, const Scene& scene, double inflation = 0.0);

/// key = value rule config files.
RuleParams load_rule_config(const std::string& path);
void save_rule_config(const RuleParams& params, const std::string& path);

}  // namespace rf::rules
