#include "rf/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rf {

using json = nlohmann::ordered_json;

namespace {

json vec2_to_json(const Vec2& v) { return json::array({v.x, v.y}); }

Vec2 vec2_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("expected [x, y] pair");
  return Vec2{j[0].get<double>(), j[1].get<double>()};
}

json ego_to_json(const EgoState& s) {
  return json{{"p", vec2_to_json(s.position)},
              {"h", s.heading},
              {"v", s.speed},
              {"t", s.timestamp_index}};
}

EgoState ego_from_json(const json& j) {
  return EgoState{vec2_from_json(j.at("p")), j.at("h").get<double>(),
                  j.at("v").get<double>(), j.at("t").get<int>()};
}

json agent_to_json(const AgentState& s) {
  return json{{"id", s.agent_id}, {"p", vec2_to_json(s.position)},
              {"h", s.heading},  {"v", s.speed},
              {"len", s.length}, {"wid", s.width}};
}

AgentState agent_from_json(const json& j) {
  return AgentState{j.at("id").get<int>(), vec2_from_json(j.at("p")),
                    j.at("h").get<double>(), j.at("v").get<double>(),
                    j.at("len").get<double>(), j.at("wid").get<double>()};
}

const char* kind_name(MapKind k) {
  switch (k) {
    case MapKind::kLaneCenterline: return "lane_centerline";
    case MapKind::kRoadBoundary: return "road_boundary";
    case MapKind::kStopLine: return "stop_line";
  }
  return "lane_centerline";
}

MapKind kind_from_name(const std::string& s) {
  if (s == "lane_centerline") return MapKind::kLaneCenterline;
  if (s == "road_boundary") return MapKind::kRoadBoundary;
  if (s == "stop_line") return MapKind::kStopLine;
  throw ParseError("unknown map element kind: " + s);
}

const char* light_name(LightState l) {
  switch (l) {
    case LightState::kGreen: return "green";
    case LightState::kRed: return "red";
    case LightState::kNone: return "none";
  }
  return "none";
}

LightState light_from_name(const std::string& s) {
  if (s == "green") return LightState::kGreen;
  if (s == "red") return LightState::kRed;
  if (s == "none") return LightState::kNone;
  throw ParseError("unknown light state: " + s);
}

json map_element_to_json(const MapElement& el) {
  json pts = json::array();
  for (const auto& p : el.points) pts.push_back(vec2_to_json(p));
  json j{{"kind", kind_name(el.kind)}, {"points", std::move(pts)}};
  if (el.kind == MapKind::kLaneCenterline) j["speed_limit"] = el.speed_limit;
  if (el.kind == MapKind::kStopLine) {
    j["light"] = light_name(el.light);
    if (el.light == LightState::kRed) {
      j["red_start"] = el.red_start;
      j["red_end"] = el.red_end;
    }
  }
  return j;
}

MapElement map_element_from_json(const json& j) {
  MapElement el;
  el.kind = kind_from_name(j.at("kind").get<std::string>());
  for (const auto& p : j.at("points")) el.points.push_back(vec2_from_json(p));
  if (el.kind == MapKind::kLaneCenterline) {
    el.speed_limit = j.at("speed_limit").get<double>();
  }
  if (el.kind == MapKind::kStopLine) {
    el.light = light_from_name(j.value("light", "none"));
    if (el.light == LightState::kRed) {
      el.red_start = j.at("red_start").get<int>();
      el.red_end = j.at("red_end").get<int>();
    }
  }
  return el;
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::kId: return "ID";
    case Regime::kOod: return "OOD";
    case Regime::kUnknown: return "unknown";
  }
  return "unknown";
}

Regime regime_from_name(const std::string& s) {
  if (s == "ID") return Regime::kId;
  if (s == "OOD") return Regime::kOod;
  if (s == "unknown") return Regime::kUnknown;
  throw ParseError("unknown regime tag: " + s);
}

}  // namespace

std::string meta_to_line(const DatasetMeta& meta) {
  const json j{{"dt", meta.dt}, {"H", meta.H}, {"F", meta.F},
               {"seed", meta.seed}, {"regime", meta.regime}};
  return j.dump();
}

DatasetMeta meta_from_line(const std::string& line) {
  const json j = json::parse(line, nullptr, true);
  DatasetMeta meta;
  meta.dt = j.at("dt").get<double>();
  meta.H = j.at("H").get<int>();
  meta.F = j.at("F").get<int>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  meta.regime = j.value("regime", "");
  return meta;
}

std::string scene_to_line(const Scene& scene) {
  json ego_hist = json::array();
  for (const auto& s : scene.ego_history) ego_hist.push_back(ego_to_json(s));
  json agents = json::array();
  for (const auto& hist : scene.agent_histories) {
    json a = json::array();
    for (const auto& s : hist) a.push_back(agent_to_json(s));
    agents.push_back(std::move(a));
  }
  json map = json::array();
  for (const auto& el : scene.map) map.push_back(map_element_to_json(el));
  json j;
  j["scene_id"] = scene.scene_id;
  j["regime_tag"] = regime_name(scene.regime_tag);
  j["ego_history"] = std::move(ego_hist);
  j["agents"] = std::move(agents);
  j["map"] = std::move(map);
  if (scene.route) {
    json pts = json::array();
    for (const auto& p : scene.route->polyline) pts.push_back(vec2_to_json(p));
    j["route"] = std::move(pts);
  } else {
    j["route"] = nullptr;
  }
  json fut = json::array();
  for (const auto& s : scene.ego_future) fut.push_back(ego_to_json(s));
  j["ego_future"] = std::move(fut);
  if (!scene.agent_futures.empty()) {
    json af = json::array();
    for (const auto& traj : scene.agent_futures) {
      json a = json::array();
      for (const auto& s : traj) a.push_back(agent_to_json(s));
      af.push_back(std::move(a));
    }
    j["agent_futures"] = std::move(af);
  }
  return j.dump();
}

Scene scene_from_line(const std::string& line) {
  const json j = json::parse(line);
  Scene scene;
  scene.scene_id = j.at("scene_id").get<std::string>();
  scene.regime_tag = regime_from_name(j.at("regime_tag").get<std::string>());
  for (const auto& e : j.at("ego_history")) scene.ego_history.push_back(ego_from_json(e));
  for (const auto& hist : j.at("agents")) {
    std::vector<AgentState> a;
    for (const auto& s : hist) a.push_back(agent_from_json(s));
    scene.agent_histories.push_back(std::move(a));
  }
  for (const auto& el : j.at("map")) scene.map.push_back(map_element_from_json(el));
  if (!j.at("route").is_null()) {
    std::vector<Vec2> pts;
    for (const auto& p : j.at("route")) pts.push_back(vec2_from_json(p));
    scene.route = make_route(std::move(pts));
  }
  for (const auto& e : j.at("ego_future")) scene.ego_future.push_back(ego_from_json(e));
  if (j.contains("agent_futures")) {
    for (const auto& traj : j.at("agent_futures")) {
      std::vector<AgentState> a;
      for (const auto& s : traj) a.push_back(agent_from_json(s));
      scene.agent_futures.push_back(std::move(a));
    }
  }
  return scene;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  Dataset dataset;
  std::string line;
  std::size_t line_no = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      if (!have_meta) {
        dataset.meta = meta_from_line(line);
        have_meta = true;
        continue;
      }
      Scene scene = scene_from_line(line);
      validate_scene(scene, dataset.meta);
      dataset.scenes.push_back(std::move(scene));
    } catch (const InvariantError& e) {
      throw InvariantError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_meta && line_no > 0) throw ParseError(path + ": missing metadata header line");
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  validate_dataset(dataset);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open dataset file for writing: " + path);
  out << meta_to_line(dataset.meta) << '\n';
  for (const auto& scene : dataset.scenes) out << scene_to_line(scene) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace rf
