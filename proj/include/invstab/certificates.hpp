#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invstab/dynamics.hpp"
#include "invstab/grid.hpp"
#include "invstab/powerflow.hpp"

namespace invstab {

inline constexpr char kCaveatCenterOutsideP[] = "CenterOutsideP";

/// Sine-gap gain (1 - sin(lambda)) / (pi/2 - lambda). Defined for
/// 0 <= lambda < pi/2; decreasing, with value 2/pi at zero.
double g_constant(double lambda);

/// Quadratic lower bound on the energy:
///   g(lambda) * sum over lines of a_lo * (x_gap - y_gap)^2 / 2.
double quad_lower_D(const GridNetwork& grid, double lambda, const Vec& x,
                    const Vec& y);

/// Quadratic upper bound on the energy: generator kinetic part plus
///   sum over lines of a_hi * (gap - y_gap)^2 / 2.
double quad_upper_F(const GridNetwork& grid, const SystemState& state,
                    const Vec& y);

struct BoundaryDistance {
  double value = 0.0;   // min of the quadratic lower bound over the box boundary
  Vec argmin;           // boundary point attaining it (mean gauge)
  int face_line = -1;   // line whose gap is pinned at +-pi/2
  int face_sign = 0;
  bool center_outside = false;  // center not in the pi/2 box; value is 0
};

/// Distance (in the quadratic-lower-bound metric) from the center angles to
/// the boundary of the pi/2 angle-gap box. Each boundary face is a convex
/// QP solved exactly by the active-set solver; ties between faces resolve
/// to the lexicographically first line. Returns zero with center_outside
/// set when the center is not inside the box.
BoundaryDistance min_distance_to_boundary(const GridNetwork& grid,
                                          const Vec& center_angles,
                                          double lambda);

/// Sublevel-set stability region around a disturbed state. Membership of an
/// equilibrium y requires every |y_gap| <= lambda and
///   kinetic_offset + sum a_hi * (center_gap - y_gap)^2 / 2  <=  threshold,
/// with threshold = radius / 4.
struct InverseStabilityRegion {
  SystemState center;
  double lambda = 0.0;
  double gain = 0.0;            // g_constant(lambda)
  double radius = 0.0;          // boundary distance of the center
  double threshold = 0.0;       // radius / 4
  double kinetic_offset = 0.0;  // generator kinetic energy of the center
  Vec lower_weights;            // per-line coupling interval, kept with the
  Vec upper_weights;            // region so reports are self-contained
  bool empty = false;           // kinetic_offset >= threshold
  std::vector<std::string> caveats;
};

InverseStabilityRegion inverse_region(const GridNetwork& grid,
                                      const SystemState& center,
                                      double lambda);

struct Containment {
  bool inside = false;
  bool in_lambda = false;
  bool in_ball = false;
  double lambda_margin = 0.0;  // lambda - max |y_gap|
  double ball_margin = 0.0;    // threshold - quadratic upper bound
};

Containment region_contains(const GridNetwork& grid,
                            const InverseStabilityRegion& region,
                            const Vec& ep_angles);

struct EMinResult {
  double value = 0.0;
  Vec argmin;  // boundary state attaining the reported value
};

/// Upper bound on the minimum of the zero-frequency energy over the
/// boundary of the pi/2 box, by damped-Newton descent on each face with
/// seeded random restarts. The potential is convex inside the box, so the
/// per-face minimizations are reliable; the result can only overestimate
/// the exact minimum. Increasing restarts never increases the value.
EMinResult e_min_oracle(const GridNetwork& grid, const EquilibriumPoint& ep,
                        int restarts = 16, std::uint64_t seed = 0x5eedu);

struct CertificateReport {
  std::string method;  // "classical" or "theorem1"
  bool passes = false;
  double energy_at_start = 0.0;
  double level = 0.0;   // certifying energy level
  double margin = 0.0;  // level - energy_at_start
  std::vector<std::string> caveats;
};

/// Energy-level certificate: the start state's energy must lie below the
/// boundary energy minimum. The level is an upper bound produced by
/// e_min_oracle, so a pass close to the level deserves scrutiny; the margin
/// is reported for exactly that reason. Fails with a caveat when the start
/// state is outside the pi/2 box.
CertificateReport classical_certificate(const GridNetwork& grid,
                                        const SystemState& s0,
                                        const EquilibriumPoint& ep,
                                        int restarts = 16,
                                        std::uint64_t seed = 0x5eedu);

/// Region certificate: the equilibrium must lie inside the inverse
/// stability region of the start state. Fails with a caveat when the start
/// state is outside the pi/2 box.
CertificateReport theorem1_certificate(const GridNetwork& grid,
                                       const SystemState& s0,
                                       const EquilibriumPoint& ep,
                                       double lambda);

}  // namespace invstab
