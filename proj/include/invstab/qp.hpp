#pragma once

#include <vector>

#include "invstab/grid.hpp"

namespace invstab {

/// Two-sided bound on an angle difference x[from] - x[to]. Setting lo == hi
/// pins the difference (used for boundary faces).
struct GapConstraint {
  int from = 0;
  int to = 0;
  double lo = 0.0;
  double hi = 0.0;
};

struct QpOptions {
  int max_iterations = 800;
  double feasibility_tol = 1e-9;
  double step_tol = 1e-11;
  double multiplier_tol = 1e-9;
};

struct QpResult {
  Vec x;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes 0.5 x'Qx + lin'x over angle vectors subject to gap constraints,
/// by a primal active-set method. Q must be positive semidefinite with any
/// flat directions limited to the uniform-shift direction; the mean of x is
/// pinned to the mean of the start point, which fixes that gauge. The start
/// point must satisfy every constraint.
///
/// All objectives fed to this solver are gauge-invariant, so the pinned mean
/// never affects the reported minimum.
QpResult solve_gap_qp(const Mat& Q, const Vec& lin,
                      const std::vector<GapConstraint>& gaps, const Vec& start,
                      const QpOptions& options = {});

/// Euclidean projection onto the gap polytope.
Vec project_onto_gaps(const Vec& x, const std::vector<GapConstraint>& gaps,
                      const Vec& feasible_start);

}  // namespace invstab
