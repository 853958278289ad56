#include "rf/rules.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rf::rules {

using geom::Vec2;

double drivable_sdf(const Vec2& p, const Scene& scene, double inflation) {
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& el : scene.map) {
    if (el.kind != MapKind::kRoadBoundary) continue;
    any = true;
    best = std::max(best, geom::point_polygon_sdf(p, el.points) + inflation);
  }
  return any ? best : std::numeric_limits<double>::infinity();
}

namespace {

double capped(double v, double cap) { return std::min(v, cap); }

const MapElement* nearest_lane(const Vec2& p, const Scene& scene) {
  const MapElement* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& el : scene.map) {
    if (el.kind != MapKind::kLaneCenterline) continue;
    const auto arc = geom::cumulative_arclength(el.points);
    const double d = geom::project_to_polyline(p, el.points, arc).distance;
    if (d < best_d) {
      best_d = d;
      best = &el;
    }
  }
  return best;
}

}  // namespace

stl::SignalBundle rule_signals(const Trajectory& traj, const Scene& scene,
                               const std::vector<Trajectory>& predicted_agents,
                               const RuleParams& params) {
  const int F = static_cast<int>(traj.states.size());
  const double cap = params.cap;
  stl::SignalBundle sig;
  auto& clearance = sig["clearance"];
  auto& drivable = sig["drivable"];
  auto& red_margin = sig["red_margin"];
  auto& speed_margin = sig["speed_margin"];
  auto& progress = sig["progress"];
  auto& lat_margin = sig["lat_margin"];
  auto& align_margin = sig["align_margin"];

  const bool has_route = scene.route.has_value();
  double progress0 = 0.0;
  if (has_route) {
    progress0 = geom::project_to_polyline(scene.current_ego().position,
                                          scene.route->polyline,
                                          scene.route->cumulative_arclength)
                    .arclength;
  }

  for (int t = 0; t < F; ++t) {
    const EgoState& st = traj.states[static_cast<std::size_t>(t)];
    const geom::Obb ego_box = ego_footprint(st.position, st.heading);

    // (i) clearance to the nearest predicted agent footprint.
    double clr = cap;
    for (std::size_t a = 0; a < predicted_agents.size(); ++a) {
      const auto& agent_traj = predicted_agents[a];
      if (t >= static_cast<int>(agent_traj.states.size())) continue;
      const EgoState& as = agent_traj.states[static_cast<std::size_t>(t)];
      double len = kEgoLength, wid = kEgoWidth;
      if (a < scene.agent_histories.size() && !scene.agent_histories[a].empty()) {
        len = scene.agent_histories[a].back().length;
        wid = scene.agent_histories[a].back().width;
      }
      const geom::Obb agent_box{as.position, as.heading, len, wid};
      clr = std::min(clr, geom::obb_clearance(ego_box, agent_box));
    }
    clearance.push_back(capped(clr - (clr >= cap ? 0.0 : params.collision_margin), cap));

    // (ii) all footprint corners inside the drivable region.
    double drv = cap;
    for (const Vec2& corner : ego_box.corners()) {
      drv = std::min(drv, drivable_sdf(corner, scene, params.boundary_inflation));
    }
    drivable.push_back(capped(drv, cap));

    // (iv) lane speed limit margin.
    const MapElement* lane = nearest_lane(st.position, scene);
    speed_margin.push_back(lane != nullptr ? capped(lane->speed_limit - st.speed, cap)
                                           : cap);

    if (has_route) {
      const auto proj = geom::project_to_polyline(st.position, scene.route->polyline,
                                                  scene.route->cumulative_arclength);
      // (iii) stay behind stop lines while their light is red.
      double red = cap;
      for (const auto& el : scene.map) {
        if (el.kind != MapKind::kStopLine || el.light != LightState::kRed) continue;
        if (st.timestamp_index < el.red_start || st.timestamp_index > el.red_end) continue;
        Vec2 mid = el.points.front();
        for (std::size_t i = 1; i < el.points.size(); ++i) mid = mid + el.points[i];
        mid = mid * (1.0 / static_cast<double>(el.points.size()));
        const double stop_arc =
            geom::project_to_polyline(mid, scene.route->polyline,
                                      scene.route->cumulative_arclength)
                .arclength;
        red = std::min(red, stop_arc - proj.arclength);
      }
      red_margin.push_back(capped(red, cap));
      // (v) forward progress along the route.
      progress.push_back(proj.arclength - progress0);
      // (vi) lateral deviation budget.
      lat_margin.push_back(capped(params.d_max - std::fabs(proj.lateral), cap));
      // (vii) alignment with the route tangent.
      align_margin.push_back(
          capped(params.theta_max - geom::angle_diff(st.heading, proj.tangent), cap));
    } else {
      // Prediction mode: route-dependent rules are vacuously satisfied.
      red_margin.push_back(cap);
      progress.push_back(cap);
      lat_margin.push_back(cap);
      align_margin.push_back(cap);
    }
  }
  return sig;
}

RuleHierarchy default_hierarchy(const RuleParams& params) {
  // Temporal windows depend on the horizon, so the formulas are bound
  // against the signal length inside evaluate_rules.
  RuleHierarchy h;
  h.rules = {
      {"avoid_collision", nullptr, params.scales[0]},
      {"stay_in_drivable_area", nullptr, params.scales[1]},
      {"follow_traffic_lights", nullptr, params.scales[2]},
      {"follow_speed_limit", nullptr, params.scales[3]},
      {"forward_progression", nullptr, params.scales[4]},
      {"stay_near_route", nullptr, params.scales[5]},
      {"stay_aligned_with_route", nullptr, params.scales[6]},
  };
  return h;
}

namespace {

/// Bind the rule formulas for a concrete horizon F.
std::vector<stl::StlPtr> bound_rule_exprs(int F, const RuleParams& params) {
  using namespace stl;
  const int last = F - 1;
  return {
      always(0, last, signal_ref("clearance")),
      always(0, last, signal_ref("drivable")),
      always(0, last, signal_ref("red_margin")),
      always(0, last, signal_ref("speed_margin")),
      always(last, last,
             predicate("progress_goal",
                       [p_min = params.progress_min](const SignalBundle& s, int t) {
                         return s.at("progress").at(static_cast<std::size_t>(t)) - p_min;
                       })),
      always(0, last, signal_ref("lat_margin")),
      always(0, last, signal_ref("align_margin")),
  };
}

}  // namespace

HierarchyResult evaluate_rules(const Trajectory& traj, const Scene& scene,
                               const std::vector<Trajectory>& predicted_agents,
                               const RuleHierarchy& hierarchy,
                               const RuleParams& params) {
  const int F = static_cast<int>(traj.states.size());
  if (F == 0) throw InvariantError("evaluate_rules: empty trajectory");
  const stl::SignalBundle sig = rule_signals(traj, scene, predicted_agents, params);
  const auto exprs = bound_rule_exprs(F, params);
  if (hierarchy.count() != static_cast<int>(exprs.size())) {
    throw InvariantError("evaluate_rules expects the 7-rule hierarchy");
  }
  HierarchyResult result;
  for (int i = 0; i < hierarchy.count(); ++i) {
    const double scale = hierarchy.rules[static_cast<std::size_t>(i)].scale;
    double rho = stl::stl_robustness(*exprs[static_cast<std::size_t>(i)], sig) / scale;
    rho = std::min(rho, params.cap);
    result.robustness.values.push_back(rho);
    result.satisfied_mask.push_back(rho > 0.0);
  }
  result.rank = hierarchy_rank(result.satisfied_mask);
  result.reward = hierarchy_reward(result.satisfied_mask, result.robustness);
  return result;
}

double hierarchy_reward(const std::vector<bool>& mask,
                        const RobustnessVector& robustness) {
  const int n = static_cast<int>(mask.size());
  if (robustness.values.size() != mask.size()) {
    throw InvariantError("hierarchy_reward: mask/robustness length mismatch");
  }
  constexpr double kEpsilon = 0.5;  // < 1 keeps the dominance property
  double reward = 0.0;
  double smooth = 0.0;
  for (int i = 0; i < n; ++i) {
    if (mask[static_cast<std::size_t>(i)]) {
      reward += std::ldexp(1.0, n - 1 - i);  // 2^(n-1-i)
    }
    const double rho = robustness.values[static_cast<std::size_t>(i)];
    const double sigma = rho >= 0.0 ? 1.0 / (1.0 + std::exp(-rho))
                                    : std::exp(rho) / (1.0 + std::exp(rho));
    smooth += sigma;
  }
  return reward + kEpsilon / n * smooth;
}

int hierarchy_rank(const std::vector<bool>& mask) {
  int code = 0;
  for (bool m : mask) code = (code << 1) | (m ? 0 : 1);
  return code + 1;
}

int safety_rank_2rule(bool collision_free, bool on_road) {
  return hierarchy_rank({collision_free, on_road});
}

RuleParams load_rule_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvariantError("cannot open rule config: " + path);
  RuleParams p;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    if (key.empty()) continue;
    double v = 0.0;
    try {
      v = std::stod(value);
    } catch (const std::exception&) {
      throw InvariantError(path + ":" + std::to_string(line_no) +
                           ": non-numeric value for " + key);
    }
    if (key == "collision_margin") p.collision_margin = v;
    else if (key == "d_max") p.d_max = v;
    else if (key == "theta_max") p.theta_max = v;
    else if (key == "progress_min") p.progress_min = v;
    else if (key == "boundary_inflation") p.boundary_inflation = v;
    else if (key == "cap") p.cap = v;
    else if (key.rfind("scale_", 0) == 0) {
      const int idx = std::stoi(key.substr(6)) - 1;
      if (idx < 0 || idx >= kNumRules) {
        throw InvariantError(path + ": scale index out of range: " + key);
      }
      p.scales[static_cast<std::size_t>(idx)] = v;
    } else {
      throw InvariantError(path + ": unknown rule config key: " + key);
    }
  }
  for (double s : p.scales) {
    if (s <= 0.0) throw InvariantError("rule scales must be positive");
  }
  return p;
}

void save_rule_config(const RuleParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvariantError("cannot write rule config: " + path);
  out << "collision_margin = " << params.collision_margin << "\n";
  out << "d_max = " << params.d_max << "\n";
  out << "theta_max = " << params.theta_max << "\n";
  out << "progress_min = " << params.progress_min << "\n";
  out << "boundary_inflation = " << params.boundary_inflation << "\n";
  out << "cap = " << params.cap << "\n";
  for (int i = 0; i < kNumRules; ++i) {
    out << "scale_" << (i + 1) << " = " << params.scales[static_cast<std::size_t>(i)]
        << "\n";
  }
}

}  // namespace rf::rules
