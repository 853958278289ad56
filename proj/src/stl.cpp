#include "rf/stl.hpp"

#include <algorithm>
#include <limits>

namespace rf::stl {

namespace {

int signal_length(const SignalBundle& signals) {
  int len = std::numeric_limits<int>::max();
  for (const auto& [name, values] : signals) {
    len = std::min(len, static_cast<int>(values.size()));
  }
  return signals.empty() ? 0 : len;
}

}  // namespace

StlPtr predicate(std::string name, std::function<double(const SignalBundle&, int)> fn) {
  auto e = std::make_shared<StlExpr>();
  e->kind = StlExpr::Kind::kPredicate;
  e->name = std::move(name);
  e->predicate = std::move(fn);
  return e;
}

StlPtr signal_ref(const std::string& signal) {
  return predicate(signal, [signal](const SignalBundle& s, int t) {
    return s.at(signal).at(static_cast<std::size_t>(t));
  });
}

StlPtr negation(StlPtr child) {
  auto e = std::make_shared<StlExpr>();
  e->kind = StlExpr::Kind::kNot;
  e->children = {std::move(child)};
  return e;
}

StlPtr conjunction(std::vector<StlPtr> children) {
  auto e = std::make_shared<StlExpr>();
  e->kind = StlExpr::Kind::kAnd;
  e->children = std::move(children);
  return e;
}

StlPtr disjunction(std::vector<StlPtr> children) {
  auto e = std::make_shared<StlExpr>();
  e->kind = StlExpr::Kind::kOr;
  e->children = std::move(children);
  return e;
}

namespace {

StlPtr temporal(StlExpr::Kind kind, int a, int b, StlPtr child) {
  if (a < 0 || a > b) throw InvariantError("STL window must satisfy 0 <= a <= b");
  auto e = std::make_shared<StlExpr>();
  e->kind = kind;
  e->a = a;
  e->b = b;
  e->children = {std::move(child)};
  return e;
}

}  // namespace

StlPtr always(int a, int b, StlPtr child) {
  return temporal(StlExpr::Kind::kAlways, a, b, std::move(child));
}

StlPtr eventually(int a, int b, StlPtr child) {
  return temporal(StlExpr::Kind::kEventually, a, b, std::move(child));
}

double stl_robustness(const StlExpr& expr, const SignalBundle& signals, int t) {
  switch (expr.kind) {
    case StlExpr::Kind::kPredicate:
      if (t < 0 || t >= signal_length(signals)) {
        throw InvariantError("STL evaluation step outside signal length");
      }
      return expr.predicate(signals, t);
    case StlExpr::Kind::kNot:
      return -stl_robustness(*expr.children[0], signals, t);
    case StlExpr::Kind::kAnd: {
      double rho = std::numeric_limits<double>::infinity();
      for (const auto& c : expr.children) rho = std::min(rho, stl_robustness(*c, signals, t));
      return rho;
    }
    case StlExpr::Kind::kOr: {
      double rho = -std::numeric_limits<double>::infinity();
      for (const auto& c : expr.children) rho = std::max(rho, stl_robustness(*c, signals, t));
      return rho;
    }
    case StlExpr::Kind::kAlways: {
      double rho = std::numeric_limits<double>::infinity();
      for (int u = t + expr.a; u <= t + expr.b; ++u) {
        rho = std::min(rho, stl_robustness(*expr.children[0], signals, u));
      }
      return rho;
    }
    case StlExpr::Kind::kEventually: {
      double rho = -std::numeric_limits<double>::infinity();
      for (int u = t + expr.a; u <= t + expr.b; ++u) {
        rho = std::max(rho, stl_robustness(*expr.children[0], signals, u));
      }
      return rho;
    }
  }
  throw InvariantError("unreachable STL node kind");
}

bool stl_satisfied(const StlExpr& expr, const SignalBundle& signals, int t) {
  switch (expr.kind) {
    case StlExpr::Kind::kPredicate:
      return expr.predicate(signals, t) > 0.0;
    case StlExpr::Kind::kNot:
      return !stl_satisfied(*expr.children[0], signals, t);
    case StlExpr::Kind::kAnd:
      return std::all_of(expr.children.begin(), expr.children.end(),
                         [&](const StlPtr& c) { return stl_satisfied(*c, signals, t); });
    case StlExpr::Kind::kOr:
      return std::any_of(expr.children.begin(), expr.children.end(),
                         [&](const StlPtr& c) { return stl_satisfied(*c, signals, t); });
    case StlExpr::Kind::kAlways: {
      for (int u = t + expr.a; u <= t + expr.b; ++u) {
        if (!stl_satisfied(*expr.children[0], signals, u)) return false;
      }
      return true;
    }
    case StlExpr::Kind::kEventually: {
      for (int u = t + expr.a; u <= t + expr.b; ++u) {
        if (stl_satisfied(*expr.children[0], signals, u)) return true;
      }
      return false;
    }
  }
  return false;
}

}  // namespace rf::stl
