// Dirichlet fusion of the rule-hierarchy prior with learned evidence,
// the predictive trajectory mixture, and the mode-selecting planner
// front end shared by the CLI and the evaluation harness.
#pragma once

#include "rf/net.hpp"
#include "rf/rh_planner.hpp"

namespace rf::fusion {

enum class PlannerMode { kRuleFuser, kIl, kRh, kMix };

PlannerMode parse_mode(const std::string& name);
std::string mode_name(PlannerMode mode);

/// Conjugate update: posterior concentration = prior + evidence.
rh::DirichletBelief fuse(const rh::DirichletBelief& prior,
                         const std::vector<double>& evidence);

/// Posterior marginal q = concentration / total.
std::vector<double> marginal(const rh::DirichletBelief& belief);

struct PlannerConfig {
  PlannerMode mode{PlannerMode::kRuleFuser};
  double n_prior{40.0};
  double zeta{1.0};
  double lambda{0.5};  // kMix interpolation weight on the learned marginal
  double dt{0.5};
  int F{6};
};

struct PlannerOutput {
  anchors::AnchorSet anchor_set;
  rh::DirichletBelief prior;
  std::vector<double> evidence;   // clamped at the concentration floor
  rh::DirichletBelief posterior;
  std::vector<double> marginal;   // distribution actually used for selection
  std::vector<Trajectory> refined;  // anchors plus learned error traces
  int selected{0};
  double total_evidence{0.0};     // sum of the raw evidence
  PlannerMode mode{PlannerMode::kRuleFuser};
};

/// Runs the selected planner on one scene. kRh ignores the network
/// entirely (params may still be supplied for refinement in other
/// modes); kIl uses a flat floor prior so the marginal is evidence-only;
/// kMix interpolates the two normalized marginals.
PlannerOutput plan(const Scene& scene, const net::NetParams& params,
                   const rules::RuleHierarchy& hierarchy,
                   const rules::RuleParams& rule_params, const PlannerConfig& config,
                   const anchors::BicycleLimits& limits = {});

struct MixtureComponent {
  Trajectory mean;    // refined trajectory
  double weight{0.0};
};

/// Gaussian mixture over futures: one isotropic unit-variance component
/// per candidate, weighted by the posterior marginal.
std::vector<MixtureComponent> predictive_mixture(const PlannerOutput& output);

/// Negative log-likelihood of a ground-truth future under the mixture,
/// summed over timesteps with a stable log-sum-exp over components.
double mixture_nll(const std::vector<MixtureComponent>& mixture,
                   const Trajectory& ground_truth);

}  // namespace rf::fusion
