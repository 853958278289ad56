#include <doctest.h>

#include <cmath>

#include "rf/fusion.hpp"
#include "rf/scenario_gen.hpp"

using namespace rf;
using namespace rf::fusion;

namespace {

struct PlannerFixture {
  Scene scene;
  net::NetParams params;
  rules::RuleParams rule_params;
  rules::RuleHierarchy hierarchy;

  PlannerFixture() : hierarchy(rules::default_hierarchy(rule_params)) {
    gen::GenConfig cfg;
    cfg.n_scenes = 1;
    cfg.mean_agent_density = 2.0;
    cfg.seed = 100;
    scene = gen::generate_scenes(cfg).scenes[0];
    net::NetConfig nc;
    nc.d = 8;
    nc.n_heads = 2;
    nc.n_hist_blocks = 1;
    nc.n_joint_blocks = 1;
    nc.d_flow = 2;
    nc.n_flow_layers = 2;
    nc.K = 6;
    params = net::init_params(nc, 3);
  }

  PlannerConfig planner_config(PlannerMode mode, double n_prior = 40.0,
                               double lambda = 0.5) const {
    PlannerConfig pc;
    pc.mode = mode;
    pc.n_prior = n_prior;
    pc.lambda = lambda;
    return pc;
  }

  PlannerOutput run(PlannerMode mode, double n_prior = 40.0,
                    double lambda = 0.5) const {
    return plan(scene, params, hierarchy, rule_params,
                planner_config(mode, n_prior, lambda));
  }
};

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::fabs(a[i] - b[i]);
  return 0.5 * tv;
}

}  // namespace

TEST_CASE("fuse adds evidence to the prior concentration") {
  const auto prior = rh::make_belief({1.0, 1.0});
  const auto post = fuse(prior, {3.0, 1.0});
  CHECK(post.concentration[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(post.concentration[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(post.total == doctest::Approx(6.0).epsilon(1e-12));
  const auto q = marginal(post);
  CHECK(q[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(fuse(prior, {1.0}), InvariantError);
  CHECK_THROWS_AS(fuse(prior, {1.0, -1.0}), InvariantError);
}

TEST_CASE("negligible evidence leaves the prior marginal unchanged") {
  const auto prior = rh::make_belief({3.0, 1.0, 6.0});
  const auto post = fuse(prior, {1e-12, 1e-12, 1e-12});
  const auto q = marginal(post);
  CHECK(q[0] == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(q[1] == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(q[2] == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("mode names round-trip and bad names throw") {
  for (PlannerMode m : {PlannerMode::kRuleFuser, PlannerMode::kIl, PlannerMode::kRh,
                        PlannerMode::kMix}) {
    CHECK(parse_mode(mode_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_mode("bogus"), InvariantError);
}

TEST_CASE("rulefuser with N_prior=0 reduces to the IL marginal") {
  const PlannerFixture fx;
  const auto rf_out = fx.run(PlannerMode::kRuleFuser, 0.0);
  const auto il_out = fx.run(PlannerMode::kIl);
  REQUIRE(rf_out.marginal.size() == il_out.marginal.size());
  for (std::size_t k = 0; k < rf_out.marginal.size(); ++k) {
    CHECK(rf_out.marginal[k] == doctest::Approx(il_out.marginal[k]).epsilon(1e-6));
  }
  CHECK(rf_out.selected == il_out.selected);
}

TEST_CASE("rulefuser with huge N_prior reduces to the RH choice") {
  const PlannerFixture fx;
  const auto rf_out = fx.run(PlannerMode::kRuleFuser, 1e9);
  const auto rh_out = fx.run(PlannerMode::kRh);
  CHECK(rf_out.selected == rh_out.selected);
  CHECK(total_variation(rf_out.marginal, rh_out.marginal) < 1e-6);
}

TEST_CASE("posterior drifts monotonically from IL to RH as N_prior grows") {
  const PlannerFixture fx;
  const auto rh_marginal = fx.run(PlannerMode::kRh).marginal;
  double prev_tv = 1e18;
  for (double n_prior : {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0,
                         300.0, 1000.0, 3000.0, 1e4, 1e5}) {
    const auto out = fx.run(PlannerMode::kRuleFuser, n_prior);
    const double tv = total_variation(out.marginal, rh_marginal);
    CHECK(tv <= prev_tv + 1e-9);
    prev_tv = tv;
  }
}

TEST_CASE("mix marginal interpolates the IL and RH marginals") {
  const PlannerFixture fx;
  const double lambda = 0.3;
  const auto mix = fx.run(PlannerMode::kMix, 40.0, lambda);
  const auto il = fx.run(PlannerMode::kIl);
  const auto rh_out = fx.run(PlannerMode::kRh);
  for (std::size_t k = 0; k < mix.marginal.size(); ++k) {
    const double want = lambda * il.marginal[k] + (1.0 - lambda) * rh_out.marginal[k];
    CHECK(mix.marginal[k] == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("selection is invariant to positive scaling of the marginal") {
  const PlannerFixture fx;
  const auto out = fx.run(PlannerMode::kRuleFuser);
  int manual = 0;
  for (std::size_t k = 1; k < out.marginal.size(); ++k) {
    if (out.marginal[k] > out.marginal[static_cast<std::size_t>(manual)]) {
      manual = static_cast<int>(k);
    }
  }
  CHECK(out.selected == manual);
  // The posterior is the conjugate combination of the reported parts.
  for (std::size_t k = 0; k < out.marginal.size(); ++k) {
    CHECK(out.posterior.concentration[k] ==
          doctest::Approx(out.prior.concentration[k] + out.evidence[k]).epsilon(1e-9));
  }
}

TEST_CASE("refined trajectories equal anchors plus error traces") {
  const PlannerFixture fx;
  const auto out = fx.run(PlannerMode::kRuleFuser);
  const auto net_out = net::infer(fx.scene, out.anchor_set, fx.params);
  REQUIRE(out.refined.size() == out.anchor_set.anchors.size());
  for (std::size_t k = 0; k < out.refined.size(); ++k) {
    const auto& e = net_out.error_traces[k];
    for (std::size_t t = 0; t < out.refined[k].states.size(); ++t) {
      const Vec2 want = out.anchor_set.anchors[k].states[t].position +
                        Vec2{e.at(static_cast<int>(t), 0), e.at(static_cast<int>(t), 1)};
      CHECK(out.refined[k].states[t].position.x == doctest::Approx(want.x).epsilon(1e-9));
      CHECK(out.refined[k].states[t].position.y == doctest::Approx(want.y).epsilon(1e-9));
    }
  }
  // RH mode keeps the raw anchors.
  const auto rh_out = fx.run(PlannerMode::kRh);
  for (std::size_t k = 0; k < rh_out.refined.size(); ++k) {
    for (std::size_t t = 0; t < rh_out.refined[k].states.size(); ++t) {
      CHECK(rh_out.refined[k].states[t].position.x ==
            rh_out.anchor_set.anchors[k].states[t].position.x);
    }
  }
}

TEST_CASE("mixture_nll matches a scalar log-sum-exp reference") {
  Trajectory gt;
  gt.states.resize(2);
  gt.states[0].position = {1.0, 0.0};
  gt.states[1].position = {2.0, 0.0};
  Trajectory m1 = gt;  // exact match
  Trajectory m2 = gt;
  m2.states[0].position = {0.0, 0.0};
  m2.states[1].position = {0.0, 1.0};
  const std::vector<MixtureComponent> mix{{m1, 0.7}, {m2, 0.3}};
  double want = 0.0;
  for (std::size_t t = 0; t < gt.states.size(); ++t) {
    double acc = 0.0;
    for (const auto& c : mix) {
      const double d2 = (c.mean.states[t].position - gt.states[t].position).norm2();
      acc += c.weight * std::exp(-0.5 * d2) / (2.0 * M_PI);
    }
    want -= std::log(acc);
  }
  CHECK(mixture_nll(mix, gt) == doctest::Approx(want).epsilon(1e-9));
  // The predictive mixture uses the posterior marginal as weights.
  const PlannerFixture fx;
  const auto out = fx.run(PlannerMode::kRuleFuser);
  const auto pm = predictive_mixture(out);
  REQUIRE(pm.size() == out.refined.size());
  double total_w = 0.0;
  for (std::size_t k = 0; k < pm.size(); ++k) {
    CHECK(pm[k].weight == doctest::Approx(out.marginal[k]).epsilon(1e-12));
    total_w += pm[k].weight;
  }
  CHECK(total_w == doctest::Approx(1.0).epsilon(1e-9));
}
