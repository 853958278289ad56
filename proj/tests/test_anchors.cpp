#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "rf/anchors.hpp"
#include "rf/scenario_gen.hpp"

using namespace rf;
using namespace rf::anchors;

namespace {

Scene straight_scene(double speed = 10.0) {
  gen::GenConfig cfg;
  cfg.n_scenes = 1;
  cfg.mean_agent_density = 0.0;
  cfg.road_kinds = {1.0, 0.0, 0.0};
  cfg.seed = 3;
  Scene s = gen::generate_scenes(cfg).scenes[0];
  // Override the scripted speeds for a controlled fixture.
  for (auto& e : s.ego_history) e.speed = speed;
  return s;
}

}  // namespace

TEST_CASE("quintic boundary conditions are met exactly") {
  const Quintic q = Quintic::boundary(1.0, 2.0, -0.5, 10.0, 0.0, 1.5, 3.0);
  CHECK(q.value(0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q.deriv(0.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(q.deriv2(0.0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(q.value(3.0) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(q.deriv(3.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  CHECK(q.deriv2(3.0) == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("quintic derivative consistency by finite differences") {
  const Quintic q = Quintic::boundary(0.0, 3.0, 0.2, 12.0, 5.0, -1.0, 3.0);
  const double h = 1e-6;
  for (double t : {0.3, 1.1, 2.7}) {
    const double fd = (q.value(t + h) - q.value(t - h)) / (2.0 * h);
    CHECK(q.deriv(t) == doctest::Approx(fd).epsilon(1e-6));
    const double fd2 = (q.deriv(t + h) - q.deriv(t - h)) / (2.0 * h);
    CHECK(q.deriv2(t) == doctest::Approx(fd2).epsilon(1e-6));
  }
}

TEST_CASE("lattice K=40 at base speed 10 is unique and offset-symmetric") {
  const auto specs = lattice_spec(40, 10.0);
  REQUIRE(specs.size() == 40);
  std::set<std::tuple<double, double, double>> uniq;
  for (const auto& s : specs) uniq.insert({s.arclength, s.lateral_offset, s.speed});
  CHECK(uniq.size() == 40);  // no duplicates
  // Symmetry: every (arc, off, v) has its mirror (arc, -off, v).
  for (const auto& s : specs) {
    CHECK(uniq.count({s.arclength, -s.lateral_offset, s.speed}) == 1);
  }
}

TEST_CASE("lattice at base speed 0 still produces K distinct specs") {
  const auto specs = lattice_spec(12, 0.0);
  REQUIRE(specs.size() == 12);
  std::set<std::tuple<double, double, double>> uniq;
  for (const auto& s : specs) uniq.insert({s.arclength, s.lateral_offset, s.speed});
  CHECK(uniq.size() == 12);
}

TEST_CASE("lattice center-out ordering starts at zero offset") {
  const auto specs = lattice_spec(40, 10.0);
  CHECK(specs.front().lateral_offset == doctest::Approx(0.0));
  // Offsets are non-decreasing in absolute value along the ordering.
  for (std::size_t i = 1; i < specs.size(); ++i) {
    CHECK(std::fabs(specs[i].lateral_offset) >=
          std::fabs(specs[i - 1].lateral_offset) - 1e-12);
  }
}

TEST_CASE("generate_anchors returns exactly K feasible trajectories") {
  const Scene s = straight_scene();
  const BicycleLimits limits;
  const AnchorSet set = generate_anchors(s, 40, limits);
  REQUIRE(set.anchors.size() == 40);
  REQUIRE(set.terminal_specs.size() == 40);
  for (const auto& t : set.anchors) {
    REQUIRE(t.states.size() == 6);
    for (const auto& st : t.states) {
      CHECK(st.speed <= limits.max_speed + 1e-6);
      CHECK(std::isfinite(st.position.x));
      CHECK(std::isfinite(st.position.y));
    }
  }
}

TEST_CASE("anchor 0 is the stay-course candidate") {
  const Scene s = straight_scene(8.0);
  const AnchorSet set = generate_anchors(s, 13, BicycleLimits{});
  CHECK(set.terminal_specs[0].lateral_offset == doctest::Approx(0.0));
  CHECK(set.terminal_specs[0].speed == doctest::Approx(8.0));
  CHECK(set.terminal_specs[0].arclength == doctest::Approx(8.0 * 3.0));
  // Constant speed along a straight route: positions advance uniformly.
  const auto& st = set.anchors[0].states;
  const double step0 = (st[1].position - st[0].position).norm();
  for (std::size_t i = 2; i < st.size(); ++i) {
    CHECK((st[i].position - st[i - 1].position).norm() == doctest::Approx(step0).epsilon(1e-4));
  }
}

TEST_CASE("generate_anchors is deterministic") {
  const Scene s = straight_scene();
  const AnchorSet a = generate_anchors(s, 20, BicycleLimits{});
  const AnchorSet b = generate_anchors(s, 20, BicycleLimits{});
  REQUIRE(a.anchors.size() == b.anchors.size());
  for (std::size_t k = 0; k < a.anchors.size(); ++k) {
    for (std::size_t t = 0; t < a.anchors[k].states.size(); ++t) {
      CHECK(a.anchors[k].states[t].position.x == b.anchors[k].states[t].position.x);
      CHECK(a.anchors[k].states[t].position.y == b.anchors[k].states[t].position.y);
    }
  }
}

TEST_CASE("short route sets the clamp flag") {
  Scene s = straight_scene();
  // Truncate the route just ahead of the ego.
  const Vec2 ego = s.current_ego().position;
  s.route = make_route({ego, ego + Vec2{5.0, 0.0}});
  const AnchorSet set = generate_anchors(s, 10, BicycleLimits{});
  CHECK(set.route_clamped);
}

TEST_CASE("prediction mode falls back to the nearest lane centerline") {
  Scene s = straight_scene();
  s.route.reset();
  const AnchorSet set = generate_anchors(s, 10, BicycleLimits{});
  CHECK(set.anchors.size() == 10);
}

TEST_CASE("anchors without any reference throw") {
  Scene s = straight_scene();
  s.route.reset();
  s.map.erase(std::remove_if(s.map.begin(), s.map.end(),
                             [](const MapElement& el) {
                               return el.kind == MapKind::kLaneCenterline;
                             }),
              s.map.end());
  CHECK_THROWS_AS(generate_anchors(s, 10, BicycleLimits{}), InvariantError);
}

TEST_CASE("infeasible terminal specs are replaced by feasible neighbors") {
  const Scene s = straight_scene(18.0);  // 1.25x multiplier would exceed max_speed
  BicycleLimits tight;
  tight.max_speed = 19.0;
  tight.max_accel = 2.0;
  tight.max_decel = 2.0;
  const AnchorSet set = generate_anchors(s, 20, tight);
  REQUIRE(set.anchors.size() == 20);
}
