#include <doctest.h>

#include <cmath>
#include <random>

#include "rf/stl.hpp"

using namespace rf;
using namespace rf::stl;

namespace {

/// Independent reference interpreter, written against the semantics
/// directly (explicit recursion, no shared code with the production one).
double ref_robustness(const StlExpr& e, const SignalBundle& sig, int t) {
  switch (e.kind) {
    case StlExpr::Kind::kPredicate:
      return e.predicate(sig, t);
    case StlExpr::Kind::kNot:
      return -ref_robustness(*e.children[0], sig, t);
    case StlExpr::Kind::kAnd: {
      double v = std::numeric_limits<double>::infinity();
      for (const auto& c : e.children) v = std::min(v, ref_robustness(*c, sig, t));
      return v;
    }
    case StlExpr::Kind::kOr: {
      double v = -std::numeric_limits<double>::infinity();
      for (const auto& c : e.children) v = std::max(v, ref_robustness(*c, sig, t));
      return v;
    }
    case StlExpr::Kind::kAlways: {
      double v = std::numeric_limits<double>::infinity();
      for (int i = e.a; i <= e.b; ++i) {
        v = std::min(v, ref_robustness(*e.children[0], sig, t + i));
      }
      return v;
    }
    case StlExpr::Kind::kEventually: {
      double v = -std::numeric_limits<double>::infinity();
      for (int i = e.a; i <= e.b; ++i) {
        v = std::max(v, ref_robustness(*e.children[0], sig, t + i));
      }
      return v;
    }
  }
  return 0.0;
}

bool ref_satisfied(const StlExpr& e, const SignalBundle& sig, int t) {
  switch (e.kind) {
    case StlExpr::Kind::kPredicate:
      return e.predicate(sig, t) > 0.0;
    case StlExpr::Kind::kNot:
      return !ref_satisfied(*e.children[0], sig, t);
    case StlExpr::Kind::kAnd:
      for (const auto& c : e.children) {
        if (!ref_satisfied(*c, sig, t)) return false;
      }
      return true;
    case StlExpr::Kind::kOr:
      for (const auto& c : e.children) {
        if (ref_satisfied(*c, sig, t)) return true;
      }
      return false;
    case StlExpr::Kind::kAlways:
      for (int i = e.a; i <= e.b; ++i) {
        if (!ref_satisfied(*e.children[0], sig, t + i)) return false;
      }
      return true;
    case StlExpr::Kind::kEventually:
      for (int i = e.a; i <= e.b; ++i) {
        if (ref_satisfied(*e.children[0], sig, t + i)) return true;
      }
      return false;
  }
  return false;
}

double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

/// Random expression tree over signals "s0","s1","s2"; `budget` bounds the
/// remaining temporal window so evaluation at step 0 stays in range.
StlPtr random_expr(std::mt19937_64& rng, int depth, int budget) {
  const double r = u01(rng);
  if (depth == 0 || r < 0.3) {
    const int which = static_cast<int>(u01(rng) * 3.0);
    return signal_ref("s" + std::to_string(which));
  }
  if (r < 0.45) return negation(random_expr(rng, depth - 1, budget));
  if (r < 0.6) {
    return conjunction({random_expr(rng, depth - 1, budget),
                        random_expr(rng, depth - 1, budget)});
  }
  if (r < 0.75) {
    return disjunction({random_expr(rng, depth - 1, budget),
                        random_expr(rng, depth - 1, budget)});
  }
  const int a = static_cast<int>(u01(rng) * (budget + 1));
  const int b = a + static_cast<int>(u01(rng) * (budget - a + 1));
  StlPtr child = random_expr(rng, depth - 1, budget - b);
  return u01(rng) < 0.5 ? always(a, b, std::move(child))
                        : eventually(a, b, std::move(child));
}

}  // namespace

TEST_CASE("predicate and boolean connectives") {
  SignalBundle sig{{"x", {1.0, -2.0, 3.0}}};
  const auto x = signal_ref("x");
  CHECK(stl_robustness(*x, sig, 0) == doctest::Approx(1.0));
  CHECK(stl_robustness(*x, sig, 1) == doctest::Approx(-2.0));
  CHECK(stl_robustness(*negation(x), sig, 1) == doctest::Approx(2.0));
  CHECK(stl_robustness(*conjunction({x, negation(x)}), sig, 2) == doctest::Approx(-3.0));
  CHECK(stl_robustness(*disjunction({x, negation(x)}), sig, 2) == doctest::Approx(3.0));
}

TEST_CASE("always and eventually windows") {
  SignalBundle sig{{"x", {5.0, 1.0, -2.0, 4.0}}};
  const auto x = signal_ref("x");
  CHECK(stl_robustness(*always(0, 3, x), sig) == doctest::Approx(-2.0));
  CHECK(stl_robustness(*always(0, 1, x), sig) == doctest::Approx(1.0));
  CHECK(stl_robustness(*eventually(1, 3, x), sig) == doctest::Approx(4.0));
  CHECK(stl_robustness(*eventually(2, 2, x), sig) == doctest::Approx(-2.0));
  CHECK(stl_robustness(*always(1, 2, x), sig, 1) == doctest::Approx(-2.0));
}

TEST_CASE("out-of-range window throws") {
  SignalBundle sig{{"x", {1.0, 2.0}}};
  CHECK_THROWS_AS(stl_robustness(*always(0, 5, signal_ref("x")), sig), InvariantError);
  CHECK_THROWS_AS(stl_robustness(*signal_ref("x"), sig, 7), InvariantError);
}

TEST_CASE("robustness matches reference on 1000 random signals and trees") {
  std::mt19937_64 rng(7);
  int positive = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    SignalBundle sig;
    for (int s = 0; s < 3; ++s) {
      auto& v = sig["s" + std::to_string(s)];
      for (int t = 0; t < 6; ++t) v.push_back(u01(rng) * 10.0 - 5.0);
    }
    const StlPtr e = random_expr(rng, 4, 5);
    const double got = stl_robustness(*e, sig, 0);
    const double want = ref_robustness(*e, sig, 0);
    CHECK(got == doctest::Approx(want).epsilon(1e-9).scale(1.0));
    if (want > 0.0) ++positive;
  }
  // Sanity: the random suite exercises both outcomes.
  CHECK(positive > 100);
  CHECK(positive < 900);
}

TEST_CASE("soundness: positive robustness implies boolean satisfaction") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    SignalBundle sig;
    for (int s = 0; s < 3; ++s) {
      auto& v = sig["s" + std::to_string(s)];
      for (int t = 0; t < 6; ++t) v.push_back(u01(rng) * 10.0 - 5.0);
    }
    const StlPtr e = random_expr(rng, 3, 5);
    const double rho = stl_robustness(*e, sig, 0);
    const bool sat = stl_satisfied(*e, sig, 0);
    CHECK(sat == ref_satisfied(*e, sig, 0));
    if (rho > 0.0) CHECK(sat);
    if (rho < 0.0) CHECK(!sat);
  }
}
