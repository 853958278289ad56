// Command-line front end: dataset generation, training, single-scene
// planning, batch evaluation, the Pareto sweep, and the evidence report.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "rf/dataset_io.hpp"
#include "rf/reports.hpp"
#include "rf/scenario_gen.hpp"

namespace {

using namespace rf;

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

rules::RuleParams load_rules_opt(const std::string& path) {
  if (path.empty()) return rules::RuleParams{};
  return rules::load_rule_config(path);
}

int cmd_gen_data(const gen::GenConfig& cfg, bool decel_lead, const std::string& out_path) {
  Dataset ds = decel_lead
                   ? gen::generate_decel_lead(cfg.n_scenes, cfg.seed, cfg.H, cfg.F, cfg.dt)
                   : gen::generate_scenes(cfg);
  save_dataset(ds, out_path);
  std::cout << "wrote " << ds.scenes.size() << " scenes to " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& val_path,
              std::uint64_t seed, int epochs, const std::string& out_path,
              const std::string& loss_log, net::NetConfig config) {
  const Dataset train_data = load_dataset(data_path);
  const Dataset val_data = val_path.empty() ? train_data : load_dataset(val_path);
  config.H = train_data.meta.H;
  config.F = train_data.meta.F;
  config.dt = train_data.meta.dt;
  if (epochs > 0) config.max_epochs = epochs;
  if (config.n_budget <= 0.0) {
    config.n_budget = static_cast<double>(train_data.scenes.size());
  }
  const net::TrainResult result = net::train(train_data, val_data, config, seed);
  net::save_checkpoint(result.params, out_path);
  if (!loss_log.empty()) net::write_loss_log(result.log, loss_log);
  std::cout << "trained " << result.log.size() << " epochs (best "
            << result.best_epoch << (result.diverged ? ", diverged-reverted" : "")
            << "), checkpoint: " << out_path << "\n";
  return 0;
}

fusion::PlannerOutput run_plan(const Scene& scene, const net::NetParams& params,
                               const rules::RuleParams& rule_params,
                               const fusion::PlannerConfig& cfg) {
  const rules::RuleHierarchy hierarchy = rules::default_hierarchy(rule_params);
  return fusion::plan(scene, params, hierarchy, rule_params, cfg);
}

void write_anchor_csv(const fusion::PlannerOutput& out, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvariantError("cannot write anchor csv: " + path);
  f << "index,beta_prior,n,beta_post,q\n";
  for (std::size_t k = 0; k < out.marginal.size(); ++k) {
    f << k << ',' << out.prior.concentration[k] << ',' << out.evidence[k] << ','
      << out.posterior.concentration[k] << ',' << out.marginal[k] << '\n';
  }
}

void write_traj_csv(const fusion::PlannerOutput& out, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvariantError("cannot write trajectory csv: " + path);
  f << "t,x,y\n";
  const auto& traj = out.refined[static_cast<std::size_t>(out.selected)];
  for (const auto& s : traj.states) {
    f << s.timestamp_index << ',' << s.position.x << ',' << s.position.y << '\n';
  }
}

void write_all_anchors_csv(const fusion::PlannerOutput& out, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvariantError("cannot write anchors csv: " + path);
  f << "anchor,t,x,y\n";
  for (std::size_t k = 0; k < out.anchor_set.anchors.size(); ++k) {
    for (const auto& s : out.anchor_set.anchors[k].states) {
      f << k << ',' << s.timestamp_index << ',' << s.position.x << ',' << s.position.y
        << '\n';
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rule-prior + learned-evidence motion planner"};
  app.require_subcommand(1);

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen::GenConfig gen_cfg;
  std::string side = "right", gen_out = "dataset.jsonl";
  bool decel_lead = false;
  double w_straight = 0.6, w_curve = 0.3, w_intersection = 0.1;
  gen_cmd->add_option("--n-scenes", gen_cfg.n_scenes);
  gen_cmd->add_option("--side", side)->check(CLI::IsMember({"right", "left"}));
  gen_cmd->add_option("--density", gen_cfg.mean_agent_density);
  gen_cmd->add_option("--w-straight", w_straight);
  gen_cmd->add_option("--w-curve", w_curve);
  gen_cmd->add_option("--w-intersection", w_intersection);
  gen_cmd->add_option("--speed-noise", gen_cfg.speed_noise);
  gen_cmd->add_option("--lateral-noise", gen_cfg.lateral_noise);
  gen_cmd->add_option("--seed", gen_cfg.seed);
  gen_cmd->add_flag("--decel-lead", decel_lead,
                    "emit the scripted rear-gap fixture family instead");
  gen_cmd->add_option("--out", gen_out)->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train the evidential planner");
  std::string train_data_path, val_data_path, ckpt_out = "checkpoint.json", loss_log;
  std::uint64_t train_seed = 0;
  int train_epochs = 0;
  net::NetConfig net_cfg;
  net_cfg.n_budget = 0.0;  // default: training-set size
  train_cmd->add_option("--data", train_data_path)->required();
  train_cmd->add_option("--val-data", val_data_path);
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--epochs", train_epochs);
  train_cmd->add_option("--out", ckpt_out);
  train_cmd->add_option("--loss-log", loss_log);
  train_cmd->add_option("--d", net_cfg.d);
  train_cmd->add_option("--d-flow", net_cfg.d_flow);
  train_cmd->add_option("--n-heads", net_cfg.n_heads);
  train_cmd->add_option("--hist-blocks", net_cfg.n_hist_blocks);
  train_cmd->add_option("--joint-blocks", net_cfg.n_joint_blocks);
  train_cmd->add_option("--flow-layers", net_cfg.n_flow_layers);
  train_cmd->add_option("--k", net_cfg.K);
  train_cmd->add_option("--n-budget", net_cfg.n_budget);
  train_cmd->add_option("--lr", net_cfg.learning_rate);
  train_cmd->add_option("--batch-size", net_cfg.batch_size);
  train_cmd->add_option("--patience", net_cfg.patience);
  train_cmd->add_option("--lambda-ent", net_cfg.lambda_ent);

  // shared planner flags
  const auto add_planner_flags = [](CLI::App* cmd, std::string& mode, double& n_prior,
                                    double& zeta, double& lambda, std::string& ckpt,
                                    std::string& rule_config) {
    cmd->add_option("--mode", mode)
        ->check(CLI::IsMember({"rulefuser", "il", "rh", "mix"}));
    cmd->add_option("--n-prior", n_prior);
    cmd->add_option("--zeta", zeta);
    cmd->add_option("--lambda", lambda);
    cmd->add_option("--checkpoint", ckpt);
    cmd->add_option("--rule-config", rule_config);
  };

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "plan on one scene");
  std::string plan_mode = "rulefuser", plan_ckpt, plan_rules, plan_data, plan_scene_id;
  std::string plan_anchor_csv, plan_traj_csv, plan_anchors_csv, plan_svg;
  double plan_n_prior = 40.0, plan_zeta = 1.0, plan_lambda = 0.5;
  add_planner_flags(plan_cmd, plan_mode, plan_n_prior, plan_zeta, plan_lambda, plan_ckpt,
                    plan_rules);
  plan_cmd->add_option("--data", plan_data)->required();
  plan_cmd->add_option("--scene-id", plan_scene_id)->required();
  plan_cmd->add_option("--anchor-csv", plan_anchor_csv,
                       "per-anchor prior/evidence/posterior table");
  plan_cmd->add_option("--traj-csv", plan_traj_csv, "selected trajectory");
  plan_cmd->add_option("--anchors-csv", plan_anchors_csv, "all anchor points");
  plan_cmd->add_option("--svg", plan_svg, "scene overlay");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a planner on a dataset");
  std::string eval_mode = "rulefuser", eval_ckpt, eval_rules, eval_data, eval_report;
  double eval_n_prior = 40.0, eval_zeta = 1.0, eval_lambda = 0.5;
  add_planner_flags(eval_cmd, eval_mode, eval_n_prior, eval_zeta, eval_lambda, eval_ckpt,
                    eval_rules);
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--report", eval_report)->required();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "N_prior Pareto sweep");
  std::string sweep_ckpt, sweep_rules, sweep_id, sweep_ood, sweep_csv = "sweep.csv";
  std::string sweep_svg, sweep_grid = "0,1,10,100,1000", sweep_lambda_grid;
  double sweep_zeta = 1.0;
  sweep_cmd->add_option("--checkpoint", sweep_ckpt)->required();
  sweep_cmd->add_option("--rule-config", sweep_rules);
  sweep_cmd->add_option("--data-id", sweep_id)->required();
  sweep_cmd->add_option("--data-ood", sweep_ood)->required();
  sweep_cmd->add_option("--grid", sweep_grid, "comma-separated N_prior values");
  sweep_cmd->add_option("--lambda-grid", sweep_lambda_grid,
                        "comma-separated mix weights");
  sweep_cmd->add_option("--zeta", sweep_zeta);
  sweep_cmd->add_option("--csv", sweep_csv);
  sweep_cmd->add_option("--svg", sweep_svg);

  // evidence
  auto* ev_cmd = app.add_subcommand("evidence", "per-regime evidence report");
  std::string ev_ckpt, ev_id, ev_ood, ev_out = "evidence.csv";
  ev_cmd->add_option("--checkpoint", ev_ckpt)->required();
  ev_cmd->add_option("--data-id", ev_id)->required();
  ev_cmd->add_option("--data-ood", ev_ood)->required();
  ev_cmd->add_option("--out", ev_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) {
      gen_cfg.driving_side =
          side == "left" ? gen::DrivingSide::kLeft : gen::DrivingSide::kRight;
      gen_cfg.road_kinds = {w_straight, w_curve, w_intersection};
      return cmd_gen_data(gen_cfg, decel_lead, gen_out);
    }
    if (train_cmd->parsed()) {
      return cmd_train(train_data_path, val_data_path, train_seed, train_epochs,
                       ckpt_out, loss_log, net_cfg);
    }
    if (plan_cmd->parsed()) {
      const Dataset ds = load_dataset(plan_data);
      const Scene* scene = nullptr;
      for (const auto& s : ds.scenes) {
        if (s.scene_id == plan_scene_id) scene = &s;
      }
      if (scene == nullptr) {
        std::cerr << "scene-id not found: " << plan_scene_id << "\n";
        return 1;
      }
      fusion::PlannerConfig cfg;
      cfg.mode = fusion::parse_mode(plan_mode);
      cfg.n_prior = plan_n_prior;
      cfg.zeta = plan_zeta;
      cfg.lambda = plan_lambda;
      cfg.dt = ds.meta.dt;
      cfg.F = ds.meta.F;
      net::NetParams params;
      if (!plan_ckpt.empty()) {
        params = net::load_checkpoint(plan_ckpt);
      } else {
        if (cfg.mode != fusion::PlannerMode::kRh) {
          std::cerr << "--checkpoint is required for mode " << plan_mode << "\n";
          return 1;
        }
        net::NetConfig nc;
        nc.H = ds.meta.H;
        nc.F = ds.meta.F;
        nc.dt = ds.meta.dt;
        params = net::init_params(nc, 0);
      }
      const auto out = run_plan(*scene, params, load_rules_opt(plan_rules), cfg);
      std::cout << "selected anchor " << out.selected << " (mode "
                << fusion::mode_name(out.mode) << ", total evidence "
                << out.total_evidence << ")\n";
      if (!plan_anchor_csv.empty()) write_anchor_csv(out, plan_anchor_csv);
      if (!plan_traj_csv.empty()) write_traj_csv(out, plan_traj_csv);
      if (!plan_anchors_csv.empty()) write_all_anchors_csv(out, plan_anchors_csv);
      if (!plan_svg.empty()) reports::write_scene_svg(*scene, out, plan_svg);
      return 0;
    }
    if (eval_cmd->parsed()) {
      const Dataset ds = load_dataset(eval_data);
      fusion::PlannerConfig cfg;
      cfg.mode = fusion::parse_mode(eval_mode);
      cfg.n_prior = eval_n_prior;
      cfg.zeta = eval_zeta;
      cfg.lambda = eval_lambda;
      cfg.dt = ds.meta.dt;
      cfg.F = ds.meta.F;
      net::NetParams params;
      if (!eval_ckpt.empty()) {
        params = net::load_checkpoint(eval_ckpt);
      } else if (cfg.mode == fusion::PlannerMode::kRh) {
        net::NetConfig nc;
        nc.H = ds.meta.H;
        nc.F = ds.meta.F;
        nc.dt = ds.meta.dt;
        params = net::init_params(nc, 0);
      } else {
        std::cerr << "--checkpoint is required for mode " << eval_mode << "\n";
        return 1;
      }
      const rules::RuleParams rp = load_rules_opt(eval_rules);
      const rules::RuleHierarchy hierarchy = rules::default_hierarchy(rp);
      const auto outputs = reports::evaluate_dataset(ds, params, hierarchy, rp, cfg);
      const auto report = metrics::compute_metrics(outputs, ds);
      std::ofstream f(eval_report);
      if (!f) throw InvariantError("cannot write report: " + eval_report);
      metrics::write_metrics_csv_header(f);
      metrics::write_metrics_csv_row(f, eval_mode, report);
      std::cout << "ade " << report.ade << ", safety " << report.safety_score
                << ", collisions " << report.pct_collision << "%\n";
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const Dataset ds_id = load_dataset(sweep_id);
      const Dataset ds_ood = load_dataset(sweep_ood);
      const net::NetParams params = net::load_checkpoint(sweep_ckpt);
      const rules::RuleParams rp = load_rules_opt(sweep_rules);
      const rules::RuleHierarchy hierarchy = rules::default_hierarchy(rp);
      fusion::PlannerConfig cfg;
      cfg.zeta = sweep_zeta;
      cfg.dt = ds_id.meta.dt;
      cfg.F = ds_id.meta.F;
      const auto table = reports::pareto_sweep(ds_id, ds_ood, params, hierarchy, rp,
                                               parse_grid(sweep_grid),
                                               parse_grid(sweep_lambda_grid), cfg);
      reports::write_sweep_csv(table, sweep_csv);
      if (!sweep_svg.empty()) reports::write_sweep_svg(table, sweep_svg);
      std::cout << "wrote " << table.rows.size() << " sweep rows to " << sweep_csv
                << "\n";
      return 0;
    }
    if (ev_cmd->parsed()) {
      const Dataset ds_id = load_dataset(ev_id);
      const Dataset ds_ood = load_dataset(ev_ood);
      const net::NetParams params = net::load_checkpoint(ev_ckpt);
      const auto report = reports::evidence_report(params, ds_id, ds_ood);
      reports::write_evidence_csv(report, ev_out);
      std::cout << "median evidence ID " << report.median_id << ", OOD "
                << report.median_ood << ", ratio " << report.ratio << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
