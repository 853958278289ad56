// Experiment orchestration: batch evaluation, the N_prior Pareto sweep
// with CSV/SVG output, and the per-regime evidence report.
#pragma once

#include "rf/metrics.hpp"

namespace rf::reports {

/// Runs the planner on every scene; deterministic, index-ordered.
std::vector<fusion::PlannerOutput> evaluate_dataset(
    const Dataset& dataset, const net::NetParams& params,
    const rules::RuleHierarchy& hierarchy, const rules::RuleParams& rule_params,
    const fusion::PlannerConfig& config);

struct SweepRow {
  std::string method;   // "rulefuser", "mix", "il", "rh"
  double grid_value{0.0};  // N_prior or lambda; 0 for the standalone rows
  metrics::MetricsReport id;
  metrics::MetricsReport ood;
  metrics::MetricsReport combined;
};

struct SweepTable {
  std::vector<SweepRow> rows;
};

/// One row per grid value for the fused planner and the fixed-weight mix,
/// plus standalone IL and RH rows. Combined metrics concatenate the ID
/// and OOD sets.
SweepTable pareto_sweep(const Dataset& dataset_id, const Dataset& dataset_ood,
                        const net::NetParams& params,
                        const rules::RuleHierarchy& hierarchy,
                        const rules::RuleParams& rule_params,
                        const std::vector<double>& n_prior_grid,
                        const std::vector<double>& lambda_grid,
                        const fusion::PlannerConfig& base_config);

void write_sweep_csv(const SweepTable& table, const std::string& path);

/// Self-contained scatter of combined safety score vs combined ADE,
/// one marker series per method.
void write_sweep_svg(const SweepTable& table, const std::string& path);

struct EvidenceReport {
  double median_id{0.0};
  double median_ood{0.0};
  double ratio{0.0};  // median_id / median_ood
  std::vector<double> per_scene_id;
  std::vector<double> per_scene_ood;
};

/// Total evidence per scene aggregated by regime; network only, no prior.
EvidenceReport evidence_report(const net::NetParams& params, const Dataset& dataset_id,
                               const Dataset& dataset_ood,
                               const anchors::BicycleLimits& limits = {});

void write_evidence_csv(const EvidenceReport& report, const std::string& path);

/// Scene overlay: map, agents, anchors, the selected plan, and the
/// ground-truth future when present.
void write_scene_svg(const Scene& scene, const fusion::PlannerOutput& output,
                     const std::string& path);

}  // namespace rf::reports
