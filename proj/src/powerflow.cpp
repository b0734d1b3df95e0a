#include "invstab/powerflow.hpp"

#include <cmath>
#include <numbers>

#include "invstab/errors.hpp"

namespace invstab {

Vec power_mismatch(const GridNetwork& grid, const InjectionVector& p,
                   const Vec& angles) {
  Vec mismatch = -p.values();
  for (const Line& line : grid.lines()) {
    const double flow = line.coupling * std::sin(angles[line.from] - angles[line.to]);
    mismatch[line.from] += flow;
    mismatch[line.to] -= flow;
  }
  return mismatch;
}

namespace {

// Cosine-weighted Laplacian, the Jacobian of the mismatch map.
Mat mismatch_jacobian(const GridNetwork& grid, const Vec& angles) {
  const int n = grid.size();
  Mat jac = Mat::Zero(n, n);
  for (const Line& line : grid.lines()) {
    const double w =
        line.coupling * std::cos(angles[line.from] - angles[line.to]);
    jac(line.from, line.to) -= w;
    jac(line.to, line.from) -= w;
    jac(line.from, line.from) += w;
    jac(line.to, line.to) += w;
  }
  return jac;
}

}  // namespace

EquilibriumPoint solve_equilibrium(const GridNetwork& grid,
                                   const InjectionVector& p,
                                   const std::optional<Vec>& guess,
                                   const NewtonOptions& options) {
  if (p.size() != grid.size()) {
    throw ValidationError("injection length does not match bus count");
  }
  const int n = grid.size();
  Vec x = guess ? *guess : dc_approx_ep(grid, p);
  if (x.size() != n) throw ValidationError("guess length does not match bus count");
  x.array() -= x[0];  // reference gauge

  Vec mismatch = power_mismatch(grid, p, x);
  double norm = mismatch.cwiseAbs().maxCoeff();

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (norm <= options.tolerance) {
      return EquilibriumPoint{x, norm};
    }

    // The reference bus row and column are dropped; on a balanced injection
    // vector its equation is implied by the others.
    const Mat jac = mismatch_jacobian(grid, x);
    Eigen::FullPivLU<Mat> lu(jac.bottomRightCorner(n - 1, n - 1));
    if (!lu.isInvertible()) {
      throw SingularJacobian("equilibrium Jacobian is singular");
    }
    const Vec delta = lu.solve(-mismatch.tail(n - 1));

    double alpha = 1.0;
    bool improved = false;
    for (int h = 0; h <= options.max_halvings; ++h) {
      Vec candidate = x;
      candidate.tail(n - 1) += alpha * delta;
      const Vec cand_mismatch = power_mismatch(grid, p, candidate);
      const double cand_norm = cand_mismatch.cwiseAbs().maxCoeff();
      if (cand_norm < norm) {
        x = candidate;
        mismatch = cand_mismatch;
        norm = cand_norm;
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) {
      throw NonConvergence("equilibrium residual stalled at " +
                           std::to_string(norm));
    }
  }
  if (norm <= options.tolerance) {
    return EquilibriumPoint{x, norm};
  }
  throw NonConvergence("equilibrium solve hit the iteration cap, residual " +
                       std::to_string(norm));
}

Vec dc_approx_ep(const GridNetwork& grid, const InjectionVector& p,
                 Gauge gauge) {
  if (p.size() != grid.size()) {
    throw ValidationError("injection length does not match bus count");
  }
  Vec x = laplacian_pseudoinverse(grid) * p.values();
  if (gauge == Gauge::ReferenceZero) x.array() -= x[0];
  return x;
}

BoxCheck in_box(const GridNetwork& grid, const Vec& angles, double bound) {
  if (!(bound > 0.0)) throw ValidationError("box bound must be positive");
  BoxCheck check;
  check.max_gap = 0.0;
  for (int e = 0; e < grid.line_count(); ++e) {
    const Line& line = grid.line(e);
    const double gap = std::abs(angles[line.from] - angles[line.to]);
    if (gap > check.max_gap) {
      check.max_gap = gap;
      check.worst_line = e;
    }
  }
  check.margin = bound - check.max_gap;
  check.inside = check.max_gap <= bound;
  return check;
}

SyncCheckReport check_sync_condition(const GridNetwork& grid,
                                     const InjectionVector& p, double lambda,
                                     bool verify_ep) {
  if (!(lambda > 0.0) || !(lambda < std::numbers::pi / 2)) {
    throw ValidationError("lambda must lie in (0, pi/2)");
  }
  SyncCheckReport report;
  const Vec dc = dc_approx_ep(grid, p);
  report.norm_value = edge_infinity_norm(grid, dc);
  report.threshold = std::sin(lambda);
  report.passes = report.norm_value <= report.threshold;
  if (report.passes && verify_ep) {
    try {
      const EquilibriumPoint ep = solve_equilibrium(grid, p, dc);
      report.ep_in_lambda = in_box(grid, ep.angles, lambda).inside;
    } catch (const Error&) {
      report.ep_in_lambda = false;
    }
  }
  return report;
}

}  // namespace invstab
