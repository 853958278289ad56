#include "rf/scenario_gen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace rf::gen {

namespace {

constexpr double kLaneHalf = 1.75;   // lane center offset from the road axis
constexpr double kRoadHalf = 3.5;    // boundary offset from the road axis
constexpr double kSpeedLimit = 13.9; // m/s

/// Platform-stable uniform in [0, 1).
double uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1p-53;
}

double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform(rng);
}

std::vector<Vec2> offset_polyline(const std::vector<Vec2>& axis, double offset) {
  std::vector<Vec2> out;
  out.reserve(axis.size());
  for (std::size_t i = 0; i < axis.size(); ++i) {
    const Vec2 a = axis[i == 0 ? 0 : i - 1];
    const Vec2 b = axis[i + 1 < axis.size() ? i + 1 : axis.size() - 1];
    Vec2 t = b - a;
    const double n = t.norm();
    if (n > 0.0) t = t * (1.0 / n);
    // Left normal; positive offset is left of the travel direction.
    out.push_back(axis[i] + Vec2{-t.y, t.x} * offset);
  }
  return out;
}

std::vector<Vec2> boundary_polygon(const std::vector<Vec2>& axis) {
  std::vector<Vec2> left = offset_polyline(axis, kRoadHalf);
  std::vector<Vec2> right = offset_polyline(axis, -kRoadHalf);
  std::vector<Vec2> poly = std::move(left);
  poly.insert(poly.end(), right.rbegin(), right.rend());
  return poly;
}

enum class RoadKind { kStraight, kCurve, kIntersection };

struct RoadLayout {
  std::vector<MapElement> map;
  std::vector<Vec2> ego_lane;       // travel direction order
  std::vector<Vec2> opposite_lane;  // travel direction order (reversed axis)
  std::vector<Vec2> cross_lane;     // intersections only
  double stop_arclength{-1.0};      // along ego lane, < 0 when absent
  bool red_light{false};
};

std::vector<Vec2> straight_axis() {
  std::vector<Vec2> axis;
  for (double x = -60.0; x <= 160.0 + 1e-9; x += 10.0) axis.push_back(Vec2{x, 0.0});
  return axis;
}

RoadLayout make_straight() {
  RoadLayout r;
  const std::vector<Vec2> axis = straight_axis();
  r.ego_lane = offset_polyline(axis, -kLaneHalf);
  r.opposite_lane = offset_polyline(axis, kLaneHalf);
  std::reverse(r.opposite_lane.begin(), r.opposite_lane.end());
  r.map.push_back(MapElement{MapKind::kLaneCenterline, r.ego_lane, kSpeedLimit,
                             LightState::kNone, 0, 0});
  r.map.push_back(MapElement{MapKind::kLaneCenterline, r.opposite_lane, kSpeedLimit,
                             LightState::kNone, 0, 0});
  r.map.push_back(MapElement{MapKind::kRoadBoundary, boundary_polygon(axis), 0.0,
                             LightState::kNone, 0, 0});
  return r;
}

RoadLayout make_curve(std::mt19937_64& rng) {
  RoadLayout r;
  const double radius = uniform_in(rng, 80.0, 150.0);
  const double sign = uniform(rng) < 0.5 ? 1.0 : -1.0;
  const double kappa = sign / radius;
  std::vector<Vec2> axis;
  Vec2 p{-60.0, 0.0};
  double heading = 0.0;
  const double step = 5.0;
  for (double s = 0.0; s <= 220.0 + 1e-9; s += step) {
    axis.push_back(p);
    p = p + Vec2{std::cos(heading), std::sin(heading)} * step;
    heading += kappa * step;
  }
  r.ego_lane = offset_polyline(axis, -kLaneHalf);
  r.opposite_lane = offset_polyline(axis, kLaneHalf);
  std::reverse(r.opposite_lane.begin(), r.opposite_lane.end());
  r.map.push_back(MapElement{MapKind::kLaneCenterline, r.ego_lane, kSpeedLimit,
                             LightState::kNone, 0, 0});
  r.map.push_back(MapElement{MapKind::kLaneCenterline, r.opposite_lane, kSpeedLimit,
                             LightState::kNone, 0, 0});
  r.map.push_back(MapElement{MapKind::kRoadBoundary, boundary_polygon(axis), 0.0,
                             LightState::kNone, 0, 0});
  return r;
}

RoadLayout make_intersection(std::mt19937_64& rng, int H) {
  RoadLayout r = make_straight();
  // Crossing road along y at x = 40.
  std::vector<Vec2> cross_axis;
  for (double y = -60.0; y <= 60.0 + 1e-9; y += 10.0) cross_axis.push_back(Vec2{40.0, y});
  r.cross_lane = offset_polyline(cross_axis, -kLaneHalf);  // travel +y, east side
  r.map.push_back(MapElement{MapKind::kLaneCenterline, r.cross_lane, kSpeedLimit,
                             LightState::kNone, 0, 0});
  r.map.push_back(MapElement{MapKind::kRoadBoundary, boundary_polygon(cross_axis), 0.0,
                             LightState::kNone, 0, 0});
  const bool red = uniform(rng) < 0.3;
  MapElement stop;
  stop.kind = MapKind::kStopLine;
  stop.points = {Vec2{34.0, -kRoadHalf}, Vec2{34.0, 0.0}};
  stop.light = red ? LightState::kRed : LightState::kGreen;
  if (red) {
    stop.red_start = 0;
    stop.red_end = 4 * (H + 1);  // covers the whole scene window
  }
  r.map.push_back(stop);
  r.stop_arclength = 34.0 - (-60.0);
  r.red_light = red;
  return r;
}

struct Script {
  double s0{0.0};     // start arclength at t = 0
  double v0{0.0};     // speed at t = 0
  double accel{0.0};  // constant, applied every step
  double lat{0.0};    // constant lateral offset from the lane center
};

/// Arclength/speed profile integrated over `steps` transitions.
void roll_script(const Script& sc, int steps, double dt, double stop_at,
                 std::vector<double>& s_out, std::vector<double>& v_out) {
  s_out.assign(static_cast<std::size_t>(steps) + 1, sc.s0);
  v_out.assign(static_cast<std::size_t>(steps) + 1, sc.v0);
  double s = sc.s0, v = sc.v0;
  for (int i = 1; i <= steps; ++i) {
    v = std::clamp(v + sc.accel * dt, 0.0, kSpeedLimit);
    if (stop_at > 0.0 && s + v * dt > stop_at) {
      v = std::max(0.0, (stop_at - s) / dt);
    }
    s += v * dt;
    s_out[static_cast<std::size_t>(i)] = s;
    v_out[static_cast<std::size_t>(i)] = v;
  }
}

EgoState lane_state(const std::vector<Vec2>& lane, const std::vector<double>& arclen,
                    double s, double lat, double v, int t) {
  const Vec2 base = geom::point_at_arclength(lane, arclen, s);
  const double th = geom::tangent_at_arclength(lane, arclen, s);
  const Vec2 p = base + Vec2{-std::sin(th), std::cos(th)} * lat;
  return EgoState{p, geom::wrap_angle(th), v, t};
}

struct AgentScript {
  Script script;
  const std::vector<Vec2>* lane{nullptr};
  double length{4.7};
  double width{1.9};
};

Scene build_canonical_scene(const GenConfig& cfg, std::mt19937_64& rng, int index) {
  const double wk = uniform(rng);
  RoadKind kind = RoadKind::kStraight;
  if (wk >= cfg.road_kinds.straight) {
    kind = wk < cfg.road_kinds.straight + cfg.road_kinds.curve ? RoadKind::kCurve
                                                               : RoadKind::kIntersection;
  }
  RoadLayout road;
  switch (kind) {
    case RoadKind::kStraight: road = make_straight(); break;
    case RoadKind::kCurve: road = make_curve(rng); break;
    case RoadKind::kIntersection: road = make_intersection(rng, cfg.H); break;
  }
  const auto ego_arclen = geom::cumulative_arclength(road.ego_lane);
  const auto opp_arclen = geom::cumulative_arclength(road.opposite_lane);
  const std::vector<double> cross_arclen =
      road.cross_lane.empty() ? std::vector<double>{}
                              : geom::cumulative_arclength(road.cross_lane);

  Script ego;
  ego.s0 = uniform_in(rng, 15.0, 30.0);
  ego.v0 = std::max(1.0, uniform_in(rng, 5.0, 11.0) +
                             (2.0 * uniform(rng) - 1.0) * cfg.speed_noise);
  const double phase = uniform(rng);
  if (phase < 0.3) {
    ego.accel = uniform_in(rng, 0.5, 1.5);
  } else if (phase < 0.7) {
    ego.accel = 0.0;
  } else {
    ego.accel = -uniform_in(rng, 0.5, 2.0);
  }
  ego.lat = (2.0 * uniform(rng) - 1.0) * cfg.lateral_noise;
  double ego_stop = -1.0;
  if (road.red_light) {
    // Scripted stop a car length short of the stop line.
    ego_stop = road.stop_arclength - 5.0;
    const double dist = std::max(1.0, ego_stop - ego.s0);
    ego.accel = -std::min(4.5, ego.v0 * ego.v0 / (2.0 * dist));
  }

  // Agent slot list, most relevant first; histories start behind by H steps.
  const double count_noise = std::min(1.5, cfg.mean_agent_density);
  const int n_agents = std::clamp(
      static_cast<int>(std::llround(cfg.mean_agent_density +
                                    (2.0 * uniform(rng) - 1.0) * count_noise)),
      0, 12);
  std::vector<AgentScript> agents;
  const auto draw_dims = [&](AgentScript& a) {
    a.length = uniform_in(rng, 4.2, 5.2);
    a.width = uniform_in(rng, 1.8, 2.0);
  };
  for (int slot = 0; slot < n_agents; ++slot) {
    AgentScript a;
    switch (slot % 4) {
      case 0:  // lead in the ego lane
        a.lane = &road.ego_lane;
        a.script.s0 = ego.s0 + uniform_in(rng, 18.0, 40.0) + 15.0 * (slot / 4);
        a.script.v0 = uniform_in(rng, 4.0, 10.0);
        a.script.accel = uniform_in(rng, -0.5, 0.5);
        break;
      case 1:  // oncoming traffic
        a.lane = &road.opposite_lane;
        a.script.s0 = uniform_in(rng, 20.0, 120.0);
        a.script.v0 = uniform_in(rng, 5.0, 10.0);
        a.script.accel = 0.0;
        break;
      case 2:  // follower in the ego lane
        a.lane = &road.ego_lane;
        a.script.s0 = std::max(2.0, ego.s0 - uniform_in(rng, 12.0, 25.0));
        a.script.v0 = uniform_in(rng, 4.0, 9.0);
        a.script.accel = 0.0;
        break;
      case 3:  // cross traffic when present, else a farther lead
        if (!road.cross_lane.empty()) {
          a.lane = &road.cross_lane;
          a.script.s0 = uniform_in(rng, 10.0, 50.0);
          a.script.v0 = uniform_in(rng, 4.0, 8.0);
          a.script.accel = 0.0;
        } else {
          a.lane = &road.ego_lane;
          a.script.s0 = ego.s0 + uniform_in(rng, 60.0, 100.0);
          a.script.v0 = uniform_in(rng, 4.0, 10.0);
          a.script.accel = 0.0;
        }
        break;
    }
    a.script.lat = (2.0 * uniform(rng) - 1.0) * cfg.lateral_noise;
    draw_dims(a);
    agents.push_back(a);
  }

  const int steps = cfg.H + cfg.F;
  std::vector<double> s_prof, v_prof;
  roll_script(ego, steps, cfg.dt, ego_stop, s_prof, v_prof);

  Scene scene;
  scene.scene_id = "scene-" + std::to_string(index);
  scene.map = road.map;
  for (int t = 0; t <= cfg.H; ++t) {
    scene.ego_history.push_back(lane_state(road.ego_lane, ego_arclen,
                                           s_prof[static_cast<std::size_t>(t)], ego.lat,
                                           v_prof[static_cast<std::size_t>(t)], t));
  }
  for (int t = cfg.H + 1; t <= steps; ++t) {
    scene.ego_future.push_back(lane_state(road.ego_lane, ego_arclen,
                                          s_prof[static_cast<std::size_t>(t)], ego.lat,
                                          v_prof[static_cast<std::size_t>(t)], t));
  }
  scene.route = make_route(road.ego_lane);

  int next_id = 1;
  for (const AgentScript& a : agents) {
    const auto& lane = *a.lane;
    const auto arclen = geom::cumulative_arclength(lane);
    std::vector<double> as, av;
    roll_script(a.script, steps, cfg.dt, -1.0, as, av);
    std::vector<AgentState> hist, fut;
    for (int t = 0; t <= steps; ++t) {
      const EgoState e = lane_state(lane, arclen, as[static_cast<std::size_t>(t)],
                                    a.script.lat, av[static_cast<std::size_t>(t)], t);
      AgentState st{next_id, e.position, e.heading, e.speed, a.length, a.width};
      if (t <= cfg.H) {
        hist.push_back(st);
      } else {
        fut.push_back(st);
      }
    }
    scene.agent_histories.push_back(std::move(hist));
    scene.agent_futures.push_back(std::move(fut));
    ++next_id;
  }
  return scene;
}

}  // namespace

void GenConfig::validate() const {
  if (n_scenes < 0) throw InvariantError("GenConfig: n_scenes must be >= 0");
  if (mean_agent_density < 0.0) throw InvariantError("GenConfig: density must be >= 0");
  if (mean_agent_density > 12.0) {
    throw InvariantError("GenConfig: density exceeds road capacity (12)");
  }
  const double sum =
      road_kinds.straight + road_kinds.curve + road_kinds.intersection;
  if (road_kinds.straight < 0.0 || road_kinds.curve < 0.0 ||
      road_kinds.intersection < 0.0 || std::abs(sum - 1.0) > 1e-9) {
    throw InvariantError("GenConfig: road kind weights must be >= 0 and sum to 1");
  }
  if (speed_noise < 0.0 || lateral_noise < 0.0) {
    throw InvariantError("GenConfig: noise scales must be >= 0");
  }
  if (lateral_noise > kRoadHalf - kLaneHalf - 1.0) {
    throw InvariantError("GenConfig: lateral noise would leave the road");
  }
  if (H < 1 || F < 1 || dt <= 0.0) throw InvariantError("GenConfig: bad horizon");
}

Dataset generate_scenes(const GenConfig& config) {
  config.validate();
  Dataset out;
  out.meta.dt = config.dt;
  out.meta.H = config.H;
  out.meta.F = config.F;
  out.meta.seed = config.seed;
  out.meta.regime = config.driving_side == DrivingSide::kRight ? "ID" : "OOD";
  std::mt19937_64 rng(config.seed);
  for (int i = 0; i < config.n_scenes; ++i) {
    Scene scene = build_canonical_scene(config, rng, i);
    scene.regime_tag =
        config.driving_side == DrivingSide::kRight ? Regime::kId : Regime::kOod;
    if (config.driving_side == DrivingSide::kLeft) scene = mirror_scene(scene);
    validate_scene(scene, out.meta);
    out.scenes.push_back(std::move(scene));
  }
  return out;
}

Scene mirror_scene(const Scene& scene) {
  Scene m = scene;
  const auto flip_ego = [](EgoState& s) {
    s.position.y = -s.position.y;
    s.heading = geom::wrap_angle(-s.heading);
  };
  const auto flip_agent = [](AgentState& s) {
    s.position.y = -s.position.y;
    s.heading = geom::wrap_angle(-s.heading);
  };
  for (auto& s : m.ego_history) flip_ego(s);
  for (auto& s : m.ego_future) flip_ego(s);
  for (auto& hist : m.agent_histories) {
    for (auto& s : hist) flip_agent(s);
  }
  for (auto& fut : m.agent_futures) {
    for (auto& s : fut) flip_agent(s);
  }
  for (auto& el : m.map) {
    for (auto& p : el.points) p.y = -p.y;
  }
  if (m.route) {
    std::vector<Vec2> pts = m.route->polyline;
    for (auto& p : pts) p.y = -p.y;
    m.route = make_route(std::move(pts));
  }
  return m;
}

Scene decel_lead_scene(std::uint64_t seed, int H, int F, double dt) {
  std::mt19937_64 rng(seed);
  GenConfig cfg;
  cfg.H = H;
  cfg.F = F;
  cfg.dt = dt;
  // The regular two-lane straight template, so the map statistics match
  // the generated training scenes. Swerving right leaves the road;
  // swerving left runs into scripted oncoming traffic, which a
  // constant-velocity prediction gets right. The only genuinely safe
  // escape is braking.
  RoadLayout road = make_straight();
  const auto ego_arclen = geom::cumulative_arclength(road.ego_lane);
  const auto opp_arclen = geom::cumulative_arclength(road.opposite_lane);

  // Current-time states; histories are constant-speed, braking starts now.
  const double ego_s = uniform_in(rng, 18.0, 24.0) + 16.0;  // room for history
  const double ego_v = uniform_in(rng, 7.5, 8.5);
  const double ego_brake = -uniform_in(rng, 2.2, 2.8);
  const double gap = uniform_in(rng, 14.0, 17.0);
  const double lead_s = ego_s + gap;
  const double lead_v = uniform_in(rng, 5.5, 6.5);
  const double lead_brake = -3.0;  // stops inside the horizon
  // A follower keeps pace behind the ego and brakes with it. Under a
  // constant-velocity prediction the follower appears to ram any braking
  // ego candidate, pushing rule-based selection toward keeping speed.
  const double follow_s = ego_s - uniform_in(rng, 6.0, 8.0);
  const double follow_v = ego_v;
  const double follow_brake = ego_brake;

  const int steps = H + F;
  // Two-phase profile: index H is the current step.
  const auto two_phase = [&](double s_now, double v_now, double brake,
                             std::vector<double>& s, std::vector<double>& v) {
    s.assign(static_cast<std::size_t>(steps) + 1, 0.0);
    v.assign(static_cast<std::size_t>(steps) + 1, 0.0);
    for (int t = 0; t <= H; ++t) {
      s[static_cast<std::size_t>(t)] = s_now - v_now * (H - t) * dt;
      v[static_cast<std::size_t>(t)] = v_now;
    }
    double sv = v_now, ss = s_now;
    for (int t = H + 1; t <= steps; ++t) {
      sv = std::max(0.0, sv + brake * dt);
      ss += sv * dt;
      s[static_cast<std::size_t>(t)] = ss;
      v[static_cast<std::size_t>(t)] = sv;
    }
  };
  std::vector<double> es, ev, ls, lv, fs, fv;
  two_phase(ego_s, ego_v, ego_brake, es, ev);
  two_phase(lead_s, lead_v, lead_brake, ls, lv);
  two_phase(follow_s, follow_v, follow_brake, fs, fv);

  Scene scene;
  scene.scene_id = "decel-lead-" + std::to_string(seed);
  scene.regime_tag = Regime::kId;
  scene.map = road.map;
  scene.route = make_route(road.ego_lane);
  for (int t = 0; t <= H; ++t) {
    scene.ego_history.push_back(lane_state(road.ego_lane, ego_arclen,
                                           es[static_cast<std::size_t>(t)], 0.0,
                                           ev[static_cast<std::size_t>(t)], t));
  }
  for (int t = H + 1; t <= steps; ++t) {
    scene.ego_future.push_back(lane_state(road.ego_lane, ego_arclen,
                                          es[static_cast<std::size_t>(t)], 0.0,
                                          ev[static_cast<std::size_t>(t)], t));
  }
  const auto add_agent = [&](int id, const std::vector<double>& s_prof,
                             const std::vector<double>& v_prof) {
    std::vector<AgentState> hist, fut;
    for (int t = 0; t <= steps; ++t) {
      const EgoState e = lane_state(road.ego_lane, ego_arclen,
                                    s_prof[static_cast<std::size_t>(t)], 0.0,
                                    v_prof[static_cast<std::size_t>(t)], t);
      const AgentState st{id, e.position, e.heading, e.speed, 4.7, 1.9};
      if (t <= H) {
        hist.push_back(st);
      } else {
        fut.push_back(st);
      }
    }
    scene.agent_histories.push_back(std::move(hist));
    scene.agent_futures.push_back(std::move(fut));
  };
  add_agent(1, ls, lv);
  add_agent(2, fs, fv);
  // Oncoming cars in the opposite lane, constant speed, spaced so every
  // left-offset candidate meets one of them inside the horizon.
  const double ego_x = -60.0 + ego_s;  // straight axis: x = -60 + arclength
  for (int i = 0; i < 2; ++i) {
    const double on_x = ego_x + 12.0 * (i + 1) + uniform_in(rng, -1.0, 1.0);
    const double on_v = uniform_in(rng, 6.5, 7.5);
    std::vector<double> os, ov;
    two_phase(160.0 - on_x, on_v, 0.0, os, ov);  // opposite lane runs -x
    std::vector<AgentState> hist, fut;
    for (int t = 0; t <= steps; ++t) {
      const EgoState e = lane_state(road.opposite_lane, opp_arclen,
                                    os[static_cast<std::size_t>(t)], 0.0,
                                    ov[static_cast<std::size_t>(t)], t);
      const AgentState st{3 + i, e.position, e.heading, e.speed, 4.7, 1.9};
      if (t <= H) {
        hist.push_back(st);
      } else {
        fut.push_back(st);
      }
    }
    scene.agent_histories.push_back(std::move(hist));
    scene.agent_futures.push_back(std::move(fut));
  }
  return scene;
}

Dataset generate_decel_lead(int n_scenes, std::uint64_t seed, int H, int F, double dt) {
  Dataset out;
  out.meta.dt = dt;
  out.meta.H = H;
  out.meta.F = F;
  out.meta.seed = seed;
  out.meta.regime = "ID";
  for (int i = 0; i < n_scenes; ++i) {
    Scene s = decel_lead_scene(seed + static_cast<std::uint64_t>(i), H, F, dt);
    s.scene_id = "decel-lead-" + std::to_string(i);
    validate_scene(s, out.meta);
    out.scenes.push_back(std::move(s));
  }
  return out;
}

}  // namespace rf::gen
