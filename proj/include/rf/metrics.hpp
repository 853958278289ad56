// Imitation, prediction, and safety metrics over per-scene planner
// outputs, aggregated across a labeled dataset.
#pragma once

#include "rf/fusion.hpp"

namespace rf::metrics {

struct MetricsReport {
  double ade{0.0};
  double fde{0.0};
  double pade{0.0};
  double pfde{0.0};
  double accuracy{0.0};      // in [0, 1]
  double made_1{0.0}, made_5{0.0}, made_20{0.0};
  double mfde_1{0.0}, mfde_5{0.0}, mfde_20{0.0};
  double kl_div{0.0};
  double nll{0.0};
  double pct_collision{0.0}; // in [0, 100]
  double pct_offroad{0.0};   // in [0, 100]
  double safety_score{0.0};  // in [0, 100]
  double mean_total_evidence{0.0};
  int n_scenes{0};
};

/// Per-scene raw measurements, exposed for diagnostics and tests.
struct SceneMetrics {
  double ade{0.0}, fde{0.0}, pade{0.0}, pfde{0.0};
  bool correct{false};
  double made_1{0.0}, made_5{0.0}, made_20{0.0};
  double mfde_1{0.0}, mfde_5{0.0}, mfde_20{0.0};
  double kl_div{0.0};
  double nll{0.0};
  bool collision{false};
  bool offroad{false};
  int safety_rank{1};  // 1..4
  double total_evidence{0.0};
};

/// Collision: oriented-footprint overlap against any labeled agent future
/// at any step. Off-road: any ego footprint corner outside the drivable
/// region at any step.
bool plan_collides(const Trajectory& plan, const Scene& scene);
bool plan_offroad(const Trajectory& plan, const Scene& scene);

SceneMetrics scene_metrics(const fusion::PlannerOutput& output, const Scene& scene);

/// Index-ordered aggregation; outputs[i] must correspond to
/// dataset.scenes[i].
MetricsReport compute_metrics(const std::vector<fusion::PlannerOutput>& outputs,
                              const Dataset& dataset);

void write_metrics_csv_header(std::ostream& out);
void write_metrics_csv_row(std::ostream& out, const std::string& label,
                           const MetricsReport& report);

}  // namespace rf::metrics
