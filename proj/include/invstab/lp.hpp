#pragma once

#include <vector>

#include "invstab/grid.hpp"

namespace invstab {

enum class Relation { LessEqual, Equal, GreaterEqual };

/// Dense linear program: minimize c'x subject to row constraints and
/// per-variable bounds (infinities allowed).
struct LinearProgram {
  Vec objective;
  Mat constraints;  // one row per constraint
  Vec rhs;
  std::vector<Relation> relations;
  Vec lower;  // -inf for free below
  Vec upper;  // +inf for free above
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Vec x;
  double objective = 0.0;
};

/// Two-phase dense tableau simplex with Bland's rule. Bounded variables are
/// shifted or split into nonnegative parts before pivoting, so the caller's
/// bounds may be any mix of finite and infinite.
LpResult solve_lp(const LinearProgram& lp);

}  // namespace invstab
