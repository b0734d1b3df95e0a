#include "invstab/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "invstab/errors.hpp"

namespace invstab {

namespace {

// One face of the working set. side +1 means the upper bound of the gap is
// active, -1 the lower bound, 0 a pinned equality (never dropped).
struct ActiveRow {
  int constraint = 0;
  int side = 0;
};

double gap_value(const Vec& x, const GapConstraint& c) {
  return x[c.from] - x[c.to];
}

}  // namespace

QpResult solve_gap_qp(const Mat& Q, const Vec& lin,
                      const std::vector<GapConstraint>& gaps, const Vec& start,
                      const QpOptions& options) {
  const int n = static_cast<int>(start.size());
  for (const GapConstraint& c : gaps) {
    if (c.lo > c.hi) throw ValidationError("gap constraint with lo > hi");
    const double v = gap_value(start, c);
    if (v < c.lo - options.feasibility_tol ||
        v > c.hi + options.feasibility_tol) {
      throw ValidationError("QP start point violates a gap constraint");
    }
  }

  Vec x = start;
  std::vector<ActiveRow> working;
  for (size_t c = 0; c < gaps.size(); ++c) {
    const GapConstraint& gc = gaps[c];
    if (gc.lo == gc.hi) {
      working.push_back({static_cast<int>(c), 0});
    } else {
      const double v = gap_value(x, gc);
      if (v >= gc.hi - options.feasibility_tol) {
        working.push_back({static_cast<int>(c), +1});
      } else if (v <= gc.lo + options.feasibility_tol) {
        working.push_back({static_cast<int>(c), -1});
      }
    }
  }

  const auto is_active = [&](int c) {
    return std::any_of(working.begin(), working.end(),
                       [c](const ActiveRow& r) { return r.constraint == c; });
  };

  QpResult result;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;

    // Equality-constrained subproblem on the working set plus the gauge row.
    const int m = static_cast<int>(working.size()) + 1;
    Mat kkt = Mat::Zero(n + m, n + m);
    kkt.topLeftCorner(n, n) = Q;
    Vec rhs(n + m);
    rhs.head(n) = -(Q * x + lin);
    rhs.tail(m).setZero();

    kkt.block(n, 0, 1, n).setOnes();  // gauge: mean of x stays fixed
    kkt.block(0, n, n, 1).setOnes();
    for (int r = 0; r < m - 1; ++r) {
      const GapConstraint& gc = gaps[working[r].constraint];
      const double sgn = working[r].side < 0 ? -1.0 : 1.0;
      kkt(n + 1 + r, gc.from) = sgn;
      kkt(n + 1 + r, gc.to) = -sgn;
      kkt(gc.from, n + 1 + r) = sgn;
      kkt(gc.to, n + 1 + r) = -sgn;
    }

    Eigen::FullPivLU<Mat> lu(kkt);
    Vec solution;
    if (lu.isInvertible()) {
      solution = lu.solve(rhs);
    } else {
      // Redundant working set (e.g. active faces closing a cycle); the
      // minimum-norm least-squares direction still solves the subproblem.
      solution = kkt.completeOrthogonalDecomposition().solve(rhs);
    }
    const Vec direction = solution.head(n);

    if (direction.cwiseAbs().maxCoeff() <= options.step_tol) {
      // Stationary on the working set; check multipliers of inequalities.
      int drop = -1;
      double most_negative = -options.multiplier_tol;
      for (int r = 0; r < m - 1; ++r) {
        if (working[r].side == 0) continue;
        const double mu = solution[n + 1 + r];
        if (mu < most_negative) {
          most_negative = mu;
          drop = r;
        }
      }
      if (drop < 0) {
        result.x = x;
        result.converged = true;
        return result;
      }
      working.erase(working.begin() + drop);
      continue;
    }

    // Ratio test against the inactive bounds.
    double alpha = 1.0;
    int blocking = -1;
    int blocking_side = 0;
    for (size_t c = 0; c < gaps.size(); ++c) {
      if (is_active(static_cast<int>(c))) continue;
      const GapConstraint& gc = gaps[c];
      const double rate = direction[gc.from] - direction[gc.to];
      const double v = gap_value(x, gc);
      if (rate > options.step_tol && std::isfinite(gc.hi)) {
        const double limit = (gc.hi - v) / rate;
        if (limit < alpha) {
          alpha = limit;
          blocking = static_cast<int>(c);
          blocking_side = +1;
        }
      } else if (rate < -options.step_tol && std::isfinite(gc.lo)) {
        const double limit = (gc.lo - v) / rate;
        if (limit < alpha) {
          alpha = limit;
          blocking = static_cast<int>(c);
          blocking_side = -1;
        }
      }
    }

    x += std::max(alpha, 0.0) * direction;
    if (blocking >= 0) {
      // Snap exactly onto the blocking bound to keep feasibility crisp.
      const GapConstraint& gc = gaps[blocking];
      const double target = blocking_side > 0 ? gc.hi : gc.lo;
      const double err = (gap_value(x, gc) - target) / 2.0;
      x[gc.from] -= err;
      x[gc.to] += err;
      working.push_back({blocking, blocking_side});
    }
  }

  result.x = x;
  result.converged = false;
  return result;
}

Vec project_onto_gaps(const Vec& x, const std::vector<GapConstraint>& gaps,
                      const Vec& feasible_start) {
  const int n = static_cast<int>(x.size());
  const QpResult r =
      solve_gap_qp(Mat::Identity(n, n), -x, gaps, feasible_start);
  if (!r.converged) {
    throw NonConvergence("projection onto gap constraints did not converge");
  }
  return r.x;
}

}  // namespace invstab
