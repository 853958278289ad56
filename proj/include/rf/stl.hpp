// Quantitative signal-temporal-logic robustness over fixed-length
// discrete signals. Formulas are built programmatically; predicates read
// named per-step signals from a bundle.
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rf/scene.hpp"

namespace rf::stl {

/// Named per-step signals, all of the same length.
using SignalBundle = std::map<std::string, std::vector<double>>;

struct StlExpr;
using StlPtr = std::shared_ptr<const StlExpr>;

struct StlExpr {
  enum class Kind { kPredicate, kNot, kAnd, kOr, kAlways, kEventually };
  Kind kind{Kind::kPredicate};
  // Predicate value at an absolute step.
  std::function<double(const SignalBundle&, int)> predicate;
  std::string name;
  std::vector<StlPtr> children;
  int a{0};  // temporal window [a, b], absolute offsets from the
  int b{0};  // evaluation step, 0 <= a <= b
};

StlPtr predicate(std::string name, std::function<double(const SignalBundle&, int)> fn);
/// Predicate reading one named signal directly.
StlPtr signal_ref(const std::string& signal);
StlPtr negation(StlPtr child);
StlPtr conjunction(std::vector<StlPtr> children);
StlPtr disjunction(std::vector<StlPtr> children);
StlPtr always(int a, int b, StlPtr child);
StlPtr eventually(int a, int b, StlPtr child);

/// Quantitative robustness of `expr` at step `t` (min/max semantics).
/// Throws InvariantError when a temporal window exceeds the signal length.
double stl_robustness(const StlExpr& expr, const SignalBundle& signals, int t = 0);

/// Boolean satisfaction under the same semantics (used by soundness tests).
bool stl_satisfied(const StlExpr& expr, const SignalBundle& signals, int t = 0);

}  // namespace rf::stl
