#pragma once

#include <optional>

#include "invstab/grid.hpp"

namespace invstab {

/// Steady-state bus angles together with the achieved power-balance
/// residual (max-norm mismatch of the active-power equations).
struct EquilibriumPoint {
  Vec angles;
  double residual = 0.0;
};

enum class Gauge { MeanZero, ReferenceZero };

struct NewtonOptions {
  double tolerance = 1e-10;  // max-norm of the mismatch
  int max_iterations = 50;
  int max_halvings = 10;  // step damping when the residual fails to drop
};

/// Result of an angle-box membership test.
struct BoxCheck {
  bool inside = false;
  int worst_line = -1;    // line index attaining max_gap, -1 when no lines
  double max_gap = 0.0;   // max |x_k - x_j| over lines
  double margin = 0.0;    // bound - max_gap, negative outside
};

struct SyncCheckReport {
  double norm_value = 0.0;  // edge-infinity norm of the DC angle estimate
  double threshold = 0.0;   // sin(lambda)
  bool passes = false;      // norm_value <= threshold
  /// When the norm test passes, the equilibrium is also solved and tested
  /// for membership in the lambda box; unset if verification was skipped.
  std::optional<bool> ep_in_lambda;
};

/// Newton solve of the active-power balance equations. The angle of the
/// reference bus (lowest id, index 0) is pinned to zero, which removes the
/// rotational gauge freedom; the remaining equations are square because the
/// mismatch always sums to zero on a balanced injection vector.
///
/// The default initial guess is dc_approx_ep(grid, p). Throws NonConvergence
/// when the residual stalls or the iteration cap is reached, and
/// SingularJacobian when the reduced Jacobian is not invertible.
EquilibriumPoint solve_equilibrium(const GridNetwork& grid,
                                   const InjectionVector& p,
                                   const std::optional<Vec>& guess = {},
                                   const NewtonOptions& options = {});

/// DC (small-angle) approximation: pseudoinverse of the nominal-coupling
/// Laplacian applied to the injections. Mean-zero by construction; pass
/// Gauge::ReferenceZero to re-gauge so the reference bus angle is zero.
Vec dc_approx_ep(const GridNetwork& grid, const InjectionVector& p,
                 Gauge gauge = Gauge::MeanZero);

/// Tests max |x_k - x_j| <= bound over all lines.
BoxCheck in_box(const GridNetwork& grid, const Vec& angles, double bound);

/// Synchronization criterion: the edge-infinity norm of the DC angle
/// estimate is compared against sin(lambda). When it passes and verify_ep
/// is set, the report additionally records whether the Newton equilibrium
/// lies inside the lambda box. Requires 0 < lambda < pi/2.
SyncCheckReport check_sync_condition(const GridNetwork& grid,
                                     const InjectionVector& p, double lambda,
                                     bool verify_ep = true);

/// Active-power mismatch at the given angles (length N, sums to ~0).
Vec power_mismatch(const GridNetwork& grid, const InjectionVector& p,
                   const Vec& angles);

}  // namespace invstab
