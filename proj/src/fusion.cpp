#include "rf/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rf::fusion {

PlannerMode parse_mode(const std::string& name) {
  if (name == "rulefuser") return PlannerMode::kRuleFuser;
  if (name == "il") return PlannerMode::kIl;
  if (name == "rh") return PlannerMode::kRh;
  if (name == "mix") return PlannerMode::kMix;
  throw InvariantError("unknown planner mode: " + name);
}

std::string mode_name(PlannerMode mode) {
  switch (mode) {
    case PlannerMode::kRuleFuser: return "rulefuser";
    case PlannerMode::kIl: return "il";
    case PlannerMode::kRh: return "rh";
    case PlannerMode::kMix: return "mix";
  }
  throw InvariantError("invalid planner mode");
}

rh::DirichletBelief fuse(const rh::DirichletBelief& prior,
                         const std::vector<double>& evidence) {
  if (prior.concentration.size() != evidence.size()) {
    throw InvariantError("fuse: prior and evidence length mismatch");
  }
  std::vector<double> conc(prior.concentration.size());
  for (std::size_t k = 0; k < conc.size(); ++k) {
    if (!(evidence[k] >= 0.0) || !std::isfinite(evidence[k])) {
      throw InvariantError("fuse: evidence entries must be finite and non-negative");
    }
    conc[k] = prior.concentration[k] + evidence[k];
  }
  return rh::make_belief(std::move(conc));
}

std::vector<double> marginal(const rh::DirichletBelief& belief) {
  std::vector<double> q(belief.concentration.size());
  for (std::size_t k = 0; k < q.size(); ++k) q[k] = belief.concentration[k] / belief.total;
  return q;
}

namespace {

int argmax(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  return best;
}

std::vector<Trajectory> refine(const anchors::AnchorSet& anchor_set,
                               const net::NetOutput& out) {
  std::vector<Trajectory> refined;
  refined.reserve(anchor_set.anchors.size());
  for (std::size_t k = 0; k < anchor_set.anchors.size(); ++k) {
    Trajectory t = anchor_set.anchors[k];
    t.source = TrajectorySource::kRefined;
    const ad::Matrix& e = out.error_traces[k];
    for (std::size_t i = 0; i < t.states.size(); ++i) {
      const int r = static_cast<int>(i);
      t.states[i].position.x += e.at(r, 0);
      t.states[i].position.y += e.at(r, 1);
    }
    // Recompute headings from the displaced positions so downstream
    // footprint checks see a consistent pose.
    for (std::size_t i = 0; i + 1 < t.states.size(); ++i) {
      const Vec2 d = t.states[i + 1].position - t.states[i].position;
      if (d.norm() > 1e-9) t.states[i].heading = std::atan2(d.y, d.x);
    }
    if (t.states.size() > 1) {
      t.states.back().heading = t.states[t.states.size() - 2].heading;
    }
    refined.push_back(std::move(t));
  }
  return refined;
}

}  // namespace

PlannerOutput plan(const Scene& scene, const net::NetParams& params,
                   const rules::RuleHierarchy& hierarchy,
                   const rules::RuleParams& rule_params, const PlannerConfig& config,
                   const anchors::BicycleLimits& limits) {
  PlannerOutput out;
  out.mode = config.mode;
  const int K = params.config.K;
  out.anchor_set = anchors::generate_anchors(scene, K, limits, config.dt, config.F);

  out.prior = rh::compute_prior(out.anchor_set, scene, hierarchy, rule_params,
                                rh::BoltzmannConfig{config.zeta}, config.n_prior,
                                config.dt);

  if (config.mode == PlannerMode::kRh) {
    out.evidence.assign(static_cast<std::size_t>(K), 0.0);
    out.posterior = out.prior;
    out.marginal = marginal(out.posterior);
    out.refined.assign(out.anchor_set.anchors.begin(), out.anchor_set.anchors.end());
    out.selected = argmax(out.marginal);
    return out;
  }

  const net::NetOutput net_out = net::infer(scene, out.anchor_set, params);
  out.total_evidence = 0.0;
  out.evidence.resize(net_out.evidence.size());
  for (std::size_t k = 0; k < net_out.evidence.size(); ++k) {
    out.total_evidence += net_out.evidence[k];
    out.evidence[k] = std::max(net_out.evidence[k], rh::kAlphaFloor);
  }
  out.refined = refine(out.anchor_set, net_out);

  const rh::DirichletBelief flat =
      rh::make_belief(std::vector<double>(static_cast<std::size_t>(K), rh::kAlphaFloor));

  switch (config.mode) {
    case PlannerMode::kRuleFuser:
      out.posterior = fuse(out.prior, out.evidence);
      out.marginal = marginal(out.posterior);
      break;
    case PlannerMode::kIl:
      out.posterior = fuse(flat, out.evidence);
      out.marginal = marginal(out.posterior);
      break;
    case PlannerMode::kMix: {
      // Fixed-weight blend of the two normalized marginals; unlike the
      // conjugate update, the weight ignores the evidence magnitude.
      out.posterior = fuse(out.prior, out.evidence);
      const std::vector<double> q_il = marginal(fuse(flat, out.evidence));
      const std::vector<double> q_rh = marginal(out.prior);
      out.marginal.resize(q_il.size());
      for (std::size_t k = 0; k < q_il.size(); ++k) {
        out.marginal[k] = config.lambda * q_il[k] + (1.0 - config.lambda) * q_rh[k];
      }
      break;
    }
    case PlannerMode::kRh:
      break;  // handled above
  }
  out.selected = argmax(out.marginal);
  return out;
}

std::vector<MixtureComponent> predictive_mixture(const PlannerOutput& output) {
  std::vector<MixtureComponent> mix;
  mix.reserve(output.refined.size());
  for (std::size_t k = 0; k < output.refined.size(); ++k) {
    mix.push_back(MixtureComponent{output.refined[k], output.marginal[k]});
  }
  return mix;
}

double mixture_nll(const std::vector<MixtureComponent>& mixture,
                   const Trajectory& ground_truth) {
  if (mixture.empty()) throw InvariantError("mixture_nll: empty mixture");
  const std::size_t F = ground_truth.states.size();
  double nll = 0.0;
  for (std::size_t t = 0; t < F; ++t) {
    const Vec2 gt = ground_truth.states[t].position;
    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<double> logs;
    logs.reserve(mixture.size());
    for (const auto& comp : mixture) {
      if (t >= comp.mean.states.size()) {
        throw InvariantError("mixture_nll: component shorter than ground truth");
      }
      const Vec2 mu = comp.mean.states[t].position;
      // Isotropic unit-variance Gaussian in 2-D.
      const double logp = std::log(std::max(comp.weight, 1e-300)) -
                          std::log(2.0 * M_PI) - 0.5 * (gt - mu).norm2();
      logs.push_back(logp);
      max_log = std::max(max_log, logp);
    }
    double sum = 0.0;
    for (double l : logs) sum += std::exp(l - max_log);
    nll -= max_log + std::log(sum);
  }
  return nll;
}

}  // namespace rf::fusion
