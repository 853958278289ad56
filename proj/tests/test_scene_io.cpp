#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "rf/dataset_io.hpp"
#include "rf/scenario_gen.hpp"

using namespace rf;

namespace {

Scene minimal_scene(int H = 4, int F = 6) {
  Scene s;
  s.scene_id = "fixture-0";
  s.regime_tag = Regime::kId;
  for (int t = 0; t <= H; ++t) {
    s.ego_history.push_back(EgoState{{static_cast<double>(t), 0.0}, 0.0, 2.0, t});
  }
  for (int t = 1; t <= F; ++t) {
    s.ego_future.push_back(EgoState{{static_cast<double>(H + t), 0.0}, 0.0, 2.0, H + t});
  }
  MapElement lane;
  lane.kind = MapKind::kLaneCenterline;
  lane.points = {{-5.0, 0.0}, {50.0, 0.0}};
  lane.speed_limit = 13.9;
  s.map.push_back(lane);
  MapElement boundary;
  boundary.kind = MapKind::kRoadBoundary;
  boundary.points = {{-5.0, -4.0}, {50.0, -4.0}, {50.0, 4.0}, {-5.0, 4.0}};
  s.map.push_back(boundary);
  s.route = make_route(lane.points);
  return s;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/rf_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("validate_scene accepts the fixture and rejects bad shapes") {
  DatasetMeta meta;
  Scene s = minimal_scene();
  CHECK_NOTHROW(validate_scene(s, meta));

  Scene short_hist = s;
  short_hist.ego_history.pop_back();
  CHECK_THROWS_AS(validate_scene(short_hist, meta), InvariantError);

  Scene bad_future = s;
  bad_future.ego_future.pop_back();
  CHECK_THROWS_AS(validate_scene(bad_future, meta), InvariantError);

  Scene bad_speed = s;
  bad_speed.ego_history[0].speed = -1.0;
  CHECK_THROWS_AS(validate_scene(bad_speed, meta), InvariantError);

  Scene bad_map = s;
  bad_map.map[0].points = {{0.0, 0.0}};
  CHECK_THROWS_AS(validate_scene(bad_map, meta), InvariantError);

  Scene bad_agent_fut = s;
  bad_agent_fut.agent_futures.push_back({});  // count mismatch with histories
  CHECK_THROWS_AS(validate_scene(bad_agent_fut, meta), InvariantError);
}

TEST_CASE("derive_kinematics headings, speeds, and stationary runs") {
  const std::vector<geom::Vec2> pts{{0, 0}, {1, 0}, {2, 1}, {2, 1}, {2, 1}};
  const auto kin = derive_kinematics(pts, 0.5, 0.7);
  CHECK(kin.speeds[0] == doctest::Approx(2.0));
  CHECK(kin.speeds[1] == doctest::Approx(std::sqrt(2.0) / 0.5));
  CHECK(kin.headings[0] == doctest::Approx(0.0));
  CHECK(kin.headings[1] == doctest::Approx(M_PI / 4.0));
  // Stationary steps inherit the previous heading.
  CHECK(kin.headings[2] == doctest::Approx(M_PI / 4.0));
  CHECK(kin.speeds[2] == doctest::Approx(0.0));
  // Last entries repeat.
  CHECK(kin.headings[4] == kin.headings[3]);
  CHECK(kin.speeds[4] == kin.speeds[3]);
  // A leading stationary run uses the provided initial heading.
  const auto kin2 = derive_kinematics({{1, 1}, {1, 1}, {2, 1}}, 0.5, 0.7);
  CHECK(kin2.headings[0] == doctest::Approx(0.7));
}

TEST_CASE("scene round trip is byte identical") {
  Scene s = minimal_scene();
  s.agent_histories.push_back(std::vector<AgentState>(
      5, AgentState{1, {8.0, 1.0}, 0.1, 3.0, 4.5, 1.8}));
  s.agent_futures.push_back(std::vector<AgentState>(
      6, AgentState{1, {9.0, 1.0}, 0.1, 3.0, 4.5, 1.8}));
  const std::string line = scene_to_line(s);
  const Scene back = scene_from_line(line);
  CHECK(scene_to_line(back) == line);
  CHECK(back.scene_id == s.scene_id);
  CHECK(back.agent_futures.size() == 1);
  CHECK(back.route.has_value());
}

TEST_CASE("meta round trip") {
  DatasetMeta meta{0.5, 4, 6, 123, "ID"};
  const DatasetMeta back = meta_from_line(meta_to_line(meta));
  CHECK(back.dt == meta.dt);
  CHECK(back.H == meta.H);
  CHECK(back.F == meta.F);
  CHECK(back.seed == meta.seed);
  CHECK(back.regime == meta.regime);
}

TEST_CASE("dataset save/load round trip with generated scenes") {
  gen::GenConfig cfg;
  cfg.n_scenes = 4;
  cfg.seed = 99;
  const Dataset ds = gen::generate_scenes(cfg);
  TempFile f("roundtrip.jsonl");
  save_dataset(ds, f.path);
  const Dataset back = load_dataset(f.path);
  REQUIRE(back.scenes.size() == ds.scenes.size());
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    CHECK(scene_to_line(back.scenes[i]) == scene_to_line(ds.scenes[i]));
  }
  TempFile f2("roundtrip2.jsonl");
  save_dataset(back, f2.path);
  std::ifstream a(f.path), b(f2.path);
  const std::string ca((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string cb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(ca == cb);
}

TEST_CASE("loader reports path and line of malformed input") {
  TempFile f("bad.jsonl");
  {
    std::ofstream out(f.path);
    out << meta_to_line(DatasetMeta{}) << "\n";
    out << "{not valid json}\n";
  }
  try {
    load_dataset(f.path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(f.path) != std::string::npos);
    CHECK(msg.find(":2:") != std::string::npos);
  }
}

TEST_CASE("loader distinguishes invariant violations from parse errors") {
  TempFile f("invariant.jsonl");
  Scene s = minimal_scene();
  s.ego_history[0].speed = -3.0;  // structurally valid, semantically not
  {
    std::ofstream out(f.path);
    out << meta_to_line(DatasetMeta{}) << "\n" << scene_to_line(s) << "\n";
  }
  CHECK_THROWS_AS(load_dataset(f.path), InvariantError);
}

TEST_CASE("missing file raises IoError") {
  CHECK_THROWS_AS(load_dataset("/tmp/rf_does_not_exist.jsonl"), IoError);
}
