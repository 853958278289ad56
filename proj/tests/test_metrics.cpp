#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rf/metrics.hpp"
#include "rf/rules.hpp"
#include "rf/scenario_gen.hpp"

using namespace rf;
using namespace rf::metrics;

namespace {

Scene base_scene(std::uint64_t seed = 200) {
  gen::GenConfig cfg;
  cfg.n_scenes = 1;
  cfg.mean_agent_density = 0.0;
  cfg.road_kinds = {1.0, 0.0, 0.0};
  cfg.seed = seed;
  return gen::generate_scenes(cfg).scenes[0];
}

Trajectory shifted(const Trajectory& t, double dy) {
  Trajectory out = t;
  for (auto& s : out.states) s.position.y += dy;
  return out;
}

/// A fully hand-built planner output over three known candidates:
/// the ground truth itself, a 1 m lateral shift, and a 30 m off-road shift.
fusion::PlannerOutput handmade_output(const Scene& scene, int selected) {
  const Trajectory gt = ground_truth_trajectory(scene);
  fusion::PlannerOutput out;
  out.anchor_set.anchors = {gt, shifted(gt, 1.0), shifted(gt, 30.0)};
  out.refined = out.anchor_set.anchors;
  out.marginal = {0.5, 0.3, 0.2};
  out.selected = selected;
  out.total_evidence = 7.5;
  out.prior = rh::make_belief({1.0, 1.0, 1.0});
  out.evidence = {0.5, 0.3, 0.2};
  out.posterior = fusion::fuse(out.prior, out.evidence);
  return out;
}

/// Independent scalar reference for every aggregate field.
MetricsReport reference_metrics(const std::vector<fusion::PlannerOutput>& outputs,
                                const std::vector<Scene>& scenes) {
  MetricsReport r;
  r.n_scenes = static_cast<int>(outputs.size());
  const double n = static_cast<double>(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& o = outputs[i];
    const auto& gt = scenes[i].ego_future;
    const std::size_t K = o.refined.size();
    std::vector<double> ades(K, 0.0), fdes(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t t = 0; t < gt.size(); ++t) {
        ades[k] += (o.refined[k].states[t].position - gt[t].position).norm();
      }
      ades[k] /= static_cast<double>(gt.size());
      fdes[k] = (o.refined[k].states.back().position - gt.back().position).norm();
    }
    const auto sel = static_cast<std::size_t>(o.selected);
    r.ade += ades[sel] / n;
    r.fde += fdes[sel] / n;
    for (std::size_t k = 0; k < K; ++k) {
      r.pade += o.marginal[k] * ades[k] / n;
      r.pfde += o.marginal[k] * fdes[k] / n;
    }
    // Closest anchor to the truth by summed squared distance.
    std::size_t k_star = 0;
    double best = 1e300;
    for (std::size_t k = 0; k < K; ++k) {
      double d = 0.0;
      for (std::size_t t = 0; t < gt.size(); ++t) {
        d += (o.anchor_set.anchors[k].states[t].position - gt[t].position).norm2();
      }
      if (d < best) {
        best = d;
        k_star = k;
      }
    }
    r.accuracy += (sel == k_star ? 1.0 : 0.0) / n;
    r.kl_div += -std::log(std::max(o.marginal[k_star], 1e-12)) / n;
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return o.marginal[a] > o.marginal[b];
                     });
    const auto top_min = [&](std::size_t kk, const std::vector<double>& v) {
      double m = 1e300;
      for (std::size_t j = 0; j < std::min(kk, K); ++j) m = std::min(m, v[order[j]]);
      return m;
    };
    r.made_1 += top_min(1, ades) / n;
    r.made_5 += top_min(5, ades) / n;
    r.made_20 += top_min(20, ades) / n;
    r.mfde_1 += top_min(1, fdes) / n;
    r.mfde_5 += top_min(5, fdes) / n;
    r.mfde_20 += top_min(20, fdes) / n;
    // NLL of the truth under the marginal-weighted unit-variance mixture.
    double nll = 0.0;
    for (std::size_t t = 0; t < gt.size(); ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double d2 = (o.refined[k].states[t].position - gt[t].position).norm2();
        acc += o.marginal[k] * std::exp(-0.5 * d2) / (2.0 * M_PI);
      }
      nll -= std::log(std::max(acc, 1e-300));
    }
    r.nll += nll / n;
    const bool collision = plan_collides(o.refined[sel], scenes[i]);
    const bool offroad = plan_offroad(o.refined[sel], scenes[i]);
    r.pct_collision += (collision ? 100.0 : 0.0) / n;
    r.pct_offroad += (offroad ? 100.0 : 0.0) / n;
    const int rank = collision ? (offroad ? 4 : 3) : (offroad ? 2 : 1);
    r.safety_score += 100.0 * (rank - 1) / 3.0 / n;
    r.mean_total_evidence += o.total_evidence / n;
  }
  return r;
}

}  // namespace

TEST_CASE("plan_collides and plan_offroad detect violations") {
  Scene scene = base_scene();
  const Trajectory gt = ground_truth_trajectory(scene);
  CHECK(!plan_collides(gt, scene));
  CHECK(!plan_offroad(gt, scene));
  CHECK(plan_offroad(shifted(gt, 30.0), scene));
  // Park an agent's labeled future on top of the plan at step 1.
  std::vector<AgentState> fut(gt.states.size());
  for (std::size_t t = 0; t < fut.size(); ++t) {
    fut[t] = AgentState{9, gt.states[1].position, gt.states[1].heading, 0.0, 4.7, 1.9};
  }
  scene.agent_futures.push_back(fut);
  CHECK(plan_collides(gt, scene));
}

TEST_CASE("aggregate metrics match the scalar reference on a 3-scene fixture") {
  std::vector<Scene> scenes{base_scene(201), base_scene(202), base_scene(203)};
  // Scene 2 gets a colliding agent future along the selected candidate.
  {
    const Trajectory gt = ground_truth_trajectory(scenes[2]);
    std::vector<AgentState> fut(gt.states.size());
    for (std::size_t t = 0; t < fut.size(); ++t) {
      fut[t] = AgentState{9, gt.states[3].position, gt.states[3].heading, 0.0, 4.7, 1.9};
    }
    scenes[2].agent_futures.push_back(fut);
  }
  std::vector<fusion::PlannerOutput> outputs{
      handmade_output(scenes[0], 0),   // perfect plan
      handmade_output(scenes[1], 2),   // off-road plan
      handmade_output(scenes[2], 0)};  // colliding plan
  Dataset ds;
  ds.scenes = scenes;
  const MetricsReport got = compute_metrics(outputs, ds);
  const MetricsReport want = reference_metrics(outputs, scenes);
  CHECK(got.n_scenes == 3);
  CHECK(got.ade == doctest::Approx(want.ade).epsilon(1e-9));
  CHECK(got.fde == doctest::Approx(want.fde).epsilon(1e-9));
  CHECK(got.pade == doctest::Approx(want.pade).epsilon(1e-9));
  CHECK(got.pfde == doctest::Approx(want.pfde).epsilon(1e-9));
  CHECK(got.accuracy == doctest::Approx(want.accuracy).epsilon(1e-9));
  CHECK(got.made_1 == doctest::Approx(want.made_1).epsilon(1e-9));
  CHECK(got.made_5 == doctest::Approx(want.made_5).epsilon(1e-9));
  CHECK(got.made_20 == doctest::Approx(want.made_20).epsilon(1e-9));
  CHECK(got.mfde_1 == doctest::Approx(want.mfde_1).epsilon(1e-9));
  CHECK(got.mfde_5 == doctest::Approx(want.mfde_5).epsilon(1e-9));
  CHECK(got.mfde_20 == doctest::Approx(want.mfde_20).epsilon(1e-9));
  CHECK(got.kl_div == doctest::Approx(want.kl_div).epsilon(1e-9));
  CHECK(got.nll == doctest::Approx(want.nll).epsilon(1e-9));
  CHECK(got.pct_collision == doctest::Approx(want.pct_collision).epsilon(1e-9));
  CHECK(got.pct_offroad == doctest::Approx(want.pct_offroad).epsilon(1e-9));
  CHECK(got.safety_score == doctest::Approx(want.safety_score).epsilon(1e-9));
  CHECK(got.mean_total_evidence ==
        doctest::Approx(want.mean_total_evidence).epsilon(1e-9));
  // Spot values that are known exactly.
  CHECK(got.pct_collision == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
  CHECK(got.pct_offroad == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
  CHECK(got.accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(got.kl_div == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("perfect plans score zero error and zero safety penalty") {
  const Scene scene = base_scene(210);
  Dataset ds;
  ds.scenes = {scene};
  const MetricsReport r = compute_metrics({handmade_output(scene, 0)}, ds);
  CHECK(r.ade == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(r.fde == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(r.accuracy == doctest::Approx(1.0));
  CHECK(r.made_1 == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(r.safety_score == doctest::Approx(0.0).scale(1.0));
  CHECK(r.pct_collision == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("worst-rank plans score exactly 100") {
  // Selected candidate is off-road and collides: rank 4 on every scene.
  Scene scene = base_scene(211);
  const Trajectory gt = ground_truth_trajectory(scene);
  const Trajectory bad = shifted(gt, 30.0);
  std::vector<AgentState> fut(gt.states.size());
  for (std::size_t t = 0; t < fut.size(); ++t) {
    fut[t] = AgentState{9, bad.states[2].position, bad.states[2].heading, 0.0, 4.7, 1.9};
  }
  scene.agent_futures.push_back(fut);
  auto out = handmade_output(scene, 2);
  Dataset ds;
  ds.scenes = {scene};
  const MetricsReport r = compute_metrics({out}, ds);
  CHECK(r.safety_score == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(r.pct_collision == doctest::Approx(100.0));
  CHECK(r.pct_offroad == doctest::Approx(100.0));
}

TEST_CASE("made_1 equals the ADE of the top-ranked candidate") {
  const Scene scene = base_scene(212);
  auto out = handmade_output(scene, 1);
  out.marginal = {0.2, 0.7, 0.1};  // top-ranked is candidate 1
  Dataset ds;
  ds.scenes = {scene};
  const MetricsReport r = compute_metrics({out}, ds);
  CHECK(r.made_1 == doctest::Approx(r.ade).epsilon(1e-12));  // selected == top ranked
  double pade = 0.0;
  const auto& gt = scene.ego_future;
  for (std::size_t k = 0; k < out.refined.size(); ++k) {
    double ade = 0.0;
    for (std::size_t t = 0; t < gt.size(); ++t) {
      ade += (out.refined[k].states[t].position - gt[t].position).norm();
    }
    pade += out.marginal[k] * ade / static_cast<double>(gt.size());
  }
  CHECK(r.pade == doctest::Approx(pade).epsilon(1e-12));
}

TEST_CASE("compute_metrics validates input alignment") {
  const Scene scene = base_scene(213);
  Dataset ds;
  ds.scenes = {scene};
  CHECK_THROWS_AS(compute_metrics({}, ds), InvariantError);
  auto out = handmade_output(scene, 0);
  out.marginal.pop_back();
  CHECK_THROWS_AS(compute_metrics({out}, ds), InvariantError);
}
