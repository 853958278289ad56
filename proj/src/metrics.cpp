#include "rf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "rf/rules.hpp"

namespace rf::metrics {

namespace {

double traj_ade(const Trajectory& a, const std::vector<EgoState>& gt) {
  double sum = 0.0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    sum += (a.states[t].position - gt[t].position).norm();
  }
  return sum / static_cast<double>(gt.size());
}

double traj_fde(const Trajectory& a, const std::vector<EgoState>& gt) {
  return (a.states.back().position - gt.back().position).norm();
}

}  // namespace

bool plan_collides(const Trajectory& plan, const Scene& scene) {
  for (std::size_t t = 0; t < plan.states.size(); ++t) {
    const geom::Obb ego =
        ego_footprint(plan.states[t].position, plan.states[t].heading);
    for (const auto& fut : scene.agent_futures) {
      if (t >= fut.size()) continue;
      if (geom::obb_overlap(ego, agent_footprint(fut[t]))) return true;
    }
  }
  return false;
}

bool plan_offroad(const Trajectory& plan, const Scene& scene) {
  for (const auto& s : plan.states) {
    const geom::Obb ego = ego_footprint(s.position, s.heading);
    for (const Vec2& corner : ego.corners()) {
      if (rules::drivable_sdf(corner, scene) < 0.0) return true;
    }
  }
  return false;
}

SceneMetrics scene_metrics(const fusion::PlannerOutput& output, const Scene& scene) {
  if (scene.ego_future.empty()) {
    throw InvariantError("scene_metrics: scene " + scene.scene_id + " has no label");
  }
  const std::size_t K = output.refined.size();
  if (output.marginal.size() != K) {
    throw InvariantError("scene_metrics: marginal/trajectory count mismatch");
  }
  SceneMetrics m;
  const auto& gt = scene.ego_future;

  std::vector<double> ades(K), fdes(K);
  for (std::size_t k = 0; k < K; ++k) {
    ades[k] = traj_ade(output.refined[k], gt);
    fdes[k] = traj_fde(output.refined[k], gt);
  }
  const std::size_t sel = static_cast<std::size_t>(output.selected);
  m.ade = ades[sel];
  m.fde = fdes[sel];
  m.pade = 0.0;
  m.pfde = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    m.pade += output.marginal[k] * ades[k];
    m.pfde += output.marginal[k] * fdes[k];
  }

  const int k_star = net::closest_anchor(output.anchor_set, ground_truth_trajectory(scene));
  m.correct = output.selected == k_star;
  m.kl_div = -std::log(std::max(output.marginal[static_cast<std::size_t>(k_star)], 1e-12));

  // top-k by marginal, descending; stable so ties break to lower index.
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return output.marginal[a] > output.marginal[b];
  });
  const auto top_min = [&](std::size_t k, const std::vector<double>& v) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < std::min(k, K); ++i) best = std::min(best, v[order[i]]);
    return best;
  };
  m.made_1 = top_min(1, ades);
  m.made_5 = top_min(5, ades);
  m.made_20 = top_min(20, ades);
  m.mfde_1 = top_min(1, fdes);
  m.mfde_5 = top_min(5, fdes);
  m.mfde_20 = top_min(20, fdes);

  m.nll = fusion::mixture_nll(fusion::predictive_mixture(output),
                              ground_truth_trajectory(scene));

  const Trajectory& plan = output.refined[sel];
  m.collision = plan_collides(plan, scene);
  m.offroad = plan_offroad(plan, scene);
  m.safety_rank = rules::safety_rank_2rule(!m.collision, !m.offroad);
  m.total_evidence = output.total_evidence;
  return m;
}

MetricsReport compute_metrics(const std::vector<fusion::PlannerOutput>& outputs,
                              const Dataset& dataset) {
  if (outputs.size() != dataset.scenes.size()) {
    throw InvariantError("compute_metrics: outputs/dataset size mismatch");
  }
  MetricsReport r;
  r.n_scenes = static_cast<int>(outputs.size());
  if (outputs.empty()) return r;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const SceneMetrics m = scene_metrics(outputs[i], dataset.scenes[i]);
    r.ade += m.ade;
    r.fde += m.fde;
    r.pade += m.pade;
    r.pfde += m.pfde;
    r.accuracy += m.correct ? 1.0 : 0.0;
    r.made_1 += m.made_1;
    r.made_5 += m.made_5;
    r.made_20 += m.made_20;
    r.mfde_1 += m.mfde_1;
    r.mfde_5 += m.mfde_5;
    r.mfde_20 += m.mfde_20;
    r.kl_div += m.kl_div;
    r.nll += m.nll;
    r.pct_collision += m.collision ? 1.0 : 0.0;
    r.pct_offroad += m.offroad ? 1.0 : 0.0;
    // Safety score is exactly the affine rank transform; no other path
    // computes it.
    r.safety_score += 100.0 * (m.safety_rank - 1) / 3.0;
    r.mean_total_evidence += m.total_evidence;
  }
  const double n = static_cast<double>(outputs.size());
  r.ade /= n;
  r.fde /= n;
  r.pade /= n;
  r.pfde /= n;
  r.accuracy /= n;
  r.made_1 /= n;
  r.made_5 /= n;
  r.made_20 /= n;
  r.mfde_1 /= n;
  r.mfde_5 /= n;
  r.mfde_20 /= n;
  r.kl_div /= n;
  r.nll /= n;
  r.pct_collision *= 100.0 / n;
  r.pct_offroad *= 100.0 / n;
  r.safety_score /= n;
  r.mean_total_evidence /= n;
  return r;
}

void write_metrics_csv_header(std::ostream& out) {
  out << "label,n_scenes,ade,fde,pade,pfde,accuracy,made_1,made_5,made_20,"
         "mfde_1,mfde_5,mfde_20,kl_div,nll,pct_collision,pct_offroad,"
         "safety_score,mean_total_evidence\n";
}

void write_metrics_csv_row(std::ostream& out, const std::string& label,
                           const MetricsReport& r) {
  out << label << ',' << r.n_scenes << ',' << r.ade << ',' << r.fde << ',' << r.pade
      << ',' << r.pfde << ',' << r.accuracy << ',' << r.made_1 << ',' << r.made_5 << ','
      << r.made_20 << ',' << r.mfde_1 << ',' << r.mfde_5 << ',' << r.mfde_20 << ','
      << r.kl_div << ',' << r.nll << ',' << r.pct_collision << ',' << r.pct_offroad
      << ',' << r.safety_score << ',' << r.mean_total_evidence << '\n';
}

}  // namespace rf::metrics
