#include "rf/reports.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace rf::reports {

std::vector<fusion::PlannerOutput> evaluate_dataset(
    const Dataset& dataset, const net::NetParams& params,
    const rules::RuleHierarchy& hierarchy, const rules::RuleParams& rule_params,
    const fusion::PlannerConfig& config) {
  std::vector<fusion::PlannerOutput> outputs;
  outputs.reserve(dataset.scenes.size());
  for (const Scene& scene : dataset.scenes) {
    outputs.push_back(fusion::plan(scene, params, hierarchy, rule_params, config));
  }
  return outputs;
}

namespace {

Dataset concat(const Dataset& a, const Dataset& b) {
  Dataset out = a;
  out.scenes.insert(out.scenes.end(), b.scenes.begin(), b.scenes.end());
  return out;
}

SweepRow make_row(const std::string& method, double grid_value, const Dataset& ds_id,
                  const Dataset& ds_ood, const net::NetParams& params,
                  const rules::RuleHierarchy& hierarchy,
                  const rules::RuleParams& rule_params,
                  const fusion::PlannerConfig& config) {
  SweepRow row;
  row.method = method;
  row.grid_value = grid_value;
  auto out_id = evaluate_dataset(ds_id, params, hierarchy, rule_params, config);
  auto out_ood = evaluate_dataset(ds_ood, params, hierarchy, rule_params, config);
  row.id = metrics::compute_metrics(out_id, ds_id);
  row.ood = metrics::compute_metrics(out_ood, ds_ood);
  std::vector<fusion::PlannerOutput> both = std::move(out_id);
  both.insert(both.end(), std::make_move_iterator(out_ood.begin()),
              std::make_move_iterator(out_ood.end()));
  row.combined = metrics::compute_metrics(both, concat(ds_id, ds_ood));
  return row;
}

}  // namespace

SweepTable pareto_sweep(const Dataset& dataset_id, const Dataset& dataset_ood,
                        const net::NetParams& params,
                        const rules::RuleHierarchy& hierarchy,
                        const rules::RuleParams& rule_params,
                        const std::vector<double>& n_prior_grid,
                        const std::vector<double>& lambda_grid,
                        const fusion::PlannerConfig& base_config) {
  if (n_prior_grid.empty()) throw InvariantError("pareto_sweep: empty N_prior grid");
  SweepTable table;
  for (double n_prior : n_prior_grid) {
    fusion::PlannerConfig cfg = base_config;
    cfg.mode = fusion::PlannerMode::kRuleFuser;
    cfg.n_prior = n_prior;
    table.rows.push_back(make_row("rulefuser", n_prior, dataset_id, dataset_ood, params,
                                  hierarchy, rule_params, cfg));
  }
  for (double lambda : lambda_grid) {
    fusion::PlannerConfig cfg = base_config;
    cfg.mode = fusion::PlannerMode::kMix;
    cfg.lambda = lambda;
    table.rows.push_back(make_row("mix", lambda, dataset_id, dataset_ood, params,
                                  hierarchy, rule_params, cfg));
  }
  {
    fusion::PlannerConfig cfg = base_config;
    cfg.mode = fusion::PlannerMode::kIl;
    table.rows.push_back(make_row("il", 0.0, dataset_id, dataset_ood, params, hierarchy,
                                  rule_params, cfg));
    cfg.mode = fusion::PlannerMode::kRh;
    table.rows.push_back(make_row("rh", 0.0, dataset_id, dataset_ood, params, hierarchy,
                                  rule_params, cfg));
  }
  return table;
}

void write_sweep_csv(const SweepTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvariantError("cannot write sweep csv: " + path);
  out << "method,grid_value,split,";
  {
    std::ostringstream header;
    metrics::write_metrics_csv_header(header);
    // Reuse the metric column order, dropping the leading label column.
    const std::string h = header.str();
    out << h.substr(h.find(',') + 1);
  }
  for (const SweepRow& row : table.rows) {
    const auto emit = [&](const char* split, const metrics::MetricsReport& r) {
      std::ostringstream line;
      metrics::write_metrics_csv_row(line, "x", r);
      const std::string l = line.str();
      out << row.method << ',' << row.grid_value << ',' << split << ','
          << l.substr(l.find(',') + 1);
    };
    emit("id", row.id);
    emit("ood", row.ood);
    emit("combined", row.combined);
  }
}

namespace {

struct Series {
  std::string color;
  std::vector<std::pair<double, double>> pts;  // (ade, safety)
};

}  // namespace

void write_sweep_svg(const SweepTable& table, const std::string& path) {
  const int W = 640, Hpx = 480, margin = 60;
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  std::vector<std::pair<std::string, Series>> series{
      {"rulefuser", {"#1f77b4", {}}},
      {"mix", {"#2ca02c", {}}},
      {"il", {"#d62728", {}}},
      {"rh", {"#9467bd", {}}}};
  for (const SweepRow& row : table.rows) {
    for (auto& [name, s] : series) {
      if (name == row.method) {
        s.pts.emplace_back(row.combined.ade, row.combined.safety_score);
        min_x = std::min(min_x, row.combined.ade);
        max_x = std::max(max_x, row.combined.ade);
        min_y = std::min(min_y, row.combined.safety_score);
        max_y = std::max(max_y, row.combined.safety_score);
      }
    }
  }
  if (!(max_x > min_x)) { min_x -= 0.5; max_x += 0.5; }
  if (!(max_y > min_y)) { min_y -= 0.5; max_y += 0.5; }
  const auto sx = [&](double x) {
    return margin + (x - min_x) / (max_x - min_x) * (W - 2 * margin);
  };
  const auto sy = [&](double y) {
    return Hpx - margin - (y - min_y) / (max_y - min_y) * (Hpx - 2 * margin);
  };
  std::ofstream out(path);
  if (!out) throw InvariantError("cannot write sweep svg: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
      << Hpx << "\" viewBox=\"0 0 " << W << ' ' << Hpx << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << Hpx - margin << "\" x2=\""
      << W - margin << "\" y2=\"" << Hpx - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
      << "\" y2=\"" << Hpx - margin << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << Hpx - 15
      << "\" text-anchor=\"middle\" font-size=\"14\">ADE (m)</text>\n";
  out << "<text x=\"18\" y=\"" << Hpx / 2
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 "
      << Hpx / 2 << ")\">safety score</text>\n";
  int legend_y = margin;
  for (const auto& [name, s] : series) {
    for (const auto& [x, y] : s.pts) {
      out << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"4\" fill=\""
          << s.color << "\"/>\n";
    }
    out << "<circle cx=\"" << W - margin + 10 << "\" cy=\"" << legend_y
        << "\" r=\"4\" fill=\"" << s.color << "\"/>\n";
    out << "<text x=\"" << W - margin + 18 << "\" y=\"" << legend_y + 4
        << "\" font-size=\"11\">" << name << "</text>\n";
    legend_y += 18;
  }
  out << "</svg>\n";
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) throw InvariantError("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

EvidenceReport evidence_report(const net::NetParams& params, const Dataset& dataset_id,
                               const Dataset& dataset_ood,
                               const anchors::BicycleLimits& limits) {
  EvidenceReport r;
  const auto total_for = [&](const Scene& scene) {
    const auto anchor_set = anchors::generate_anchors(scene, params.config.K, limits,
                                                      params.config.dt, params.config.F);
    const net::NetOutput out = net::infer(scene, anchor_set, params);
    double total = 0.0;
    for (double n : out.evidence) total += n;
    return total;
  };
  for (const Scene& s : dataset_id.scenes) r.per_scene_id.push_back(total_for(s));
  for (const Scene& s : dataset_ood.scenes) r.per_scene_ood.push_back(total_for(s));
  r.median_id = median(r.per_scene_id);
  r.median_ood = median(r.per_scene_ood);
  r.ratio = r.median_id / std::max(r.median_ood, 1e-300);
  return r;
}

void write_evidence_csv(const EvidenceReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvariantError("cannot write evidence csv: " + path);
  out << "regime,scene_index,total_evidence\n";
  for (std::size_t i = 0; i < report.per_scene_id.size(); ++i) {
    out << "ID," << i << ',' << report.per_scene_id[i] << '\n';
  }
  for (std::size_t i = 0; i < report.per_scene_ood.size(); ++i) {
    out << "OOD," << i << ',' << report.per_scene_ood[i] << '\n';
  }
  out << "median_ID,," << report.median_id << '\n';
  out << "median_OOD,," << report.median_ood << '\n';
  out << "ratio,," << report.ratio << '\n';
}

void write_scene_svg(const Scene& scene, const fusion::PlannerOutput& output,
                     const std::string& path) {
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  const auto grow = [&](const Vec2& p) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  };
  for (const auto& el : scene.map) {
    for (const auto& p : el.points) grow(p);
  }
  if (!(max_x > min_x)) { min_x -= 1; max_x += 1; }
  if (!(max_y > min_y)) { min_y -= 1; max_y += 1; }
  const int W = 800;
  const double scale = (W - 40) / std::max(max_x - min_x, 1.0);
  const int Hpx = static_cast<int>((max_y - min_y) * scale) + 40;
  const auto sx = [&](double x) { return 20 + (x - min_x) * scale; };
  const auto sy = [&](double y) { return Hpx - 20 - (y - min_y) * scale; };
  std::ofstream out(path);
  if (!out) throw InvariantError("cannot write scene svg: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
      << Hpx << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const auto polyline = [&](const std::vector<Vec2>& pts, const char* color, int width,
                            const char* dash) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
        << "\"";
    if (dash[0] != '\0') out << " stroke-dasharray=\"" << dash << "\"";
    out << " points=\"";
    for (const auto& p : pts) out << sx(p.x) << ',' << sy(p.y) << ' ';
    out << "\"/>\n";
  };
  for (const auto& el : scene.map) {
    switch (el.kind) {
      case MapKind::kRoadBoundary: polyline(el.points, "#888888", 2, ""); break;
      case MapKind::kLaneCenterline: polyline(el.points, "#cccccc", 1, "4,4"); break;
      case MapKind::kStopLine:
        polyline(el.points, el.light == LightState::kRed ? "#cc0000" : "#00aa00", 3, "");
        break;
    }
  }
  const auto traj_points = [](const Trajectory& t) {
    std::vector<Vec2> pts;
    for (const auto& s : t.states) pts.push_back(s.position);
    return pts;
  };
  for (const auto& anchor : output.refined) {
    polyline(traj_points(anchor), "#aaccee", 1, "");
  }
  if (!scene.ego_future.empty()) {
    std::vector<Vec2> pts;
    for (const auto& s : scene.ego_future) pts.push_back(s.position);
    polyline(pts, "#2ca02c", 2, "");
  }
  polyline(traj_points(output.refined[static_cast<std::size_t>(output.selected)]),
           "#1f77b4", 3, "");
  const auto box = [&](const geom::Obb& obb, const char* color) {
    const auto c = obb.corners();
    out << "<polygon fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto& p : c) out << sx(p.x) << ',' << sy(p.y) << ' ';
    out << "\"/>\n";
  };
  box(ego_footprint(scene.current_ego().position, scene.current_ego().heading),
      "#000000");
  for (const auto& hist : scene.agent_histories) {
    box(agent_footprint(hist.back()), "#d62728");
  }
  out << "</svg>\n";
}

}  // namespace rf::reports
