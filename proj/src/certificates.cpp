#include "invstab/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "invstab/errors.hpp"
#include "invstab/qp.hpp"

namespace invstab {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2;

double potential_energy(const GridNetwork& grid, const Vec& angles,
                        const Vec& ep_angles) {
  double value = 0.0;
  for (const Line& line : grid.lines()) {
    const double gap = angles[line.from] - angles[line.to];
    const double eq = ep_angles[line.from] - ep_angles[line.to];
    value +=
        line.coupling * (std::cos(eq) - std::cos(gap) - std::sin(eq) * (gap - eq));
  }
  return value;
}

// Lines ordered by endpoint pair, the order faces are visited in so that
// ties resolve to the lexicographically first line.
std::vector<int> lexicographic_lines(const GridNetwork& grid) {
  std::vector<int> order(grid.line_count());
  for (int e = 0; e < grid.line_count(); ++e) order[e] = e;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Line& la = grid.line(a);
    const Line& lb = grid.line(b);
    return std::pair(la.from, la.to) < std::pair(lb.from, lb.to);
  });
  return order;
}

// Gap constraints describing one boundary face: the chosen line pinned at
// sign * pi/2, every other line inside the box.
std::vector<GapConstraint> face_constraints(const GridNetwork& grid,
                                            int face_line, int sign) {
  std::vector<GapConstraint> gaps;
  gaps.reserve(grid.line_count());
  for (int e = 0; e < grid.line_count(); ++e) {
    const Line& line = grid.line(e);
    GapConstraint c{line.from, line.to, -kHalfPi, kHalfPi};
    if (e == face_line) c.lo = c.hi = sign * kHalfPi;
    gaps.push_back(c);
  }
  return gaps;
}

// A point on the face: sign * pi/2 times the hop distance from the line's
// "to" endpoint. Hop distances are 1-Lipschitz along edges, so every gap
// stays inside the box, and the pinned line spans exactly one hop.
Vec face_feasible_point(const GridNetwork& grid, int face_line, int sign) {
  const int n = grid.size();
  const Line& pinned = grid.line(face_line);
  std::vector<int> dist(n, -1);
  std::vector<int> queue{pinned.to};
  dist[pinned.to] = 0;
  for (size_t head = 0; head < queue.size(); ++head) {
    const int k = queue[head];
    for (const Line& line : grid.lines()) {
      const int other = line.from == k ? line.to : (line.to == k ? line.from : -1);
      if (other >= 0 && dist[other] < 0) {
        dist[other] = dist[k] + 1;
        queue.push_back(other);
      }
    }
  }
  Vec x(n);
  for (int k = 0; k < n; ++k) {
    x[k] = sign * kHalfPi * static_cast<double>(std::max(dist[k], 0));
  }
  x.array() -= x.mean();
  return x;
}

struct FaceMinimum {
  double value = 0.0;
  Vec argmin;
};

// Minimum of the quadratic-lower-bound metric from the center over one face.
FaceMinimum face_distance(const GridNetwork& grid, const Vec& center,
                          double gain, const Mat& lower_laplacian,
                          int face_line, int sign) {
  const Mat q = gain * lower_laplacian;
  const Vec lin = -(q * center);
  const QpResult r = solve_gap_qp(q, lin, face_constraints(grid, face_line, sign),
                                  face_feasible_point(grid, face_line, sign));
  if (!r.converged) {
    throw NonConvergence("boundary face minimization did not converge");
  }
  double value = 0.0;
  for (const Line& line : grid.lines()) {
    const double d = (r.x[line.from] - r.x[line.to]) -
                     (center[line.from] - center[line.to]);
    value += 0.5 * gain * line.coupling_lo * d * d;
  }
  return FaceMinimum{value, r.x};
}

// Damped Newton descent of the potential energy over one face. The
// potential is convex wherever every gap is within pi/2, which holds on the
// whole feasible set, so this converges to the face minimum.
FaceMinimum minimize_energy_on_face(const GridNetwork& grid,
                                    const Vec& ep_angles,
                                    const std::vector<GapConstraint>& gaps,
                                    Vec x) {
  const int n = grid.size();
  double value = potential_energy(grid, x, ep_angles);
  for (int iter = 0; iter < 80; ++iter) {
    Vec grad = Vec::Zero(n);
    Mat hess = Mat::Zero(n, n);
    for (const Line& line : grid.lines()) {
      const double gap = x[line.from] - x[line.to];
      const double eq = ep_angles[line.from] - ep_angles[line.to];
      const double g = line.coupling * (std::sin(gap) - std::sin(eq));
      grad[line.from] += g;
      grad[line.to] -= g;
      const double w = line.coupling * std::cos(gap);
      hess(line.from, line.to) -= w;
      hess(line.to, line.from) -= w;
      hess(line.from, line.from) += w;
      hess(line.to, line.to) += w;
    }
    hess.diagonal().array() += 1e-9;

    const Vec lin = grad - hess * x;
    const QpResult r = solve_gap_qp(hess, lin, gaps, x);
    if (!r.converged) break;
    Vec step = r.x - x;
    if (step.cwiseAbs().maxCoeff() <= 1e-11) break;

    double beta = 1.0;
    bool improved = false;
    for (int h = 0; h < 30; ++h) {
      const Vec candidate = x + beta * step;
      const double cand_value = potential_energy(grid, candidate, ep_angles);
      if (cand_value <= value) {
        // Ties still move the iterate so flat directions can drain.
        improved = cand_value < value || beta == 1.0;
        x = candidate;
        value = cand_value;
        break;
      }
      beta *= 0.5;
    }
    if (!improved) break;
  }
  return FaceMinimum{value, x};
}

}  // namespace

double g_constant(double lambda) {
  if (!(lambda >= 0.0) || lambda >= kHalfPi) {
    throw ValidationError("g_constant requires 0 <= lambda < pi/2");
  }
  return (1.0 - std::sin(lambda)) / (kHalfPi - lambda);
}

double quad_lower_D(const GridNetwork& grid, double lambda, const Vec& x,
                    const Vec& y) {
  const double gain = g_constant(lambda);
  double value = 0.0;
  for (const Line& line : grid.lines()) {
    const double d =
        (x[line.from] - x[line.to]) - (y[line.from] - y[line.to]);
    value += 0.5 * gain * line.coupling_lo * d * d;
  }
  return value;
}

double quad_upper_F(const GridNetwork& grid, const SystemState& state,
                    const Vec& y) {
  double value = 0.0;
  for (int i = 0; i < grid.generator_count(); ++i) {
    const Bus& bus = grid.bus(grid.generators()[i]);
    value += 0.5 * bus.inertia * state.gen_frequencies[i] *
             state.gen_frequencies[i];
  }
  for (const Line& line : grid.lines()) {
    const double d = (state.angles[line.from] - state.angles[line.to]) -
                     (y[line.from] - y[line.to]);
    value += 0.5 * line.coupling_hi * d * d;
  }
  return value;
}

BoundaryDistance min_distance_to_boundary(const GridNetwork& grid,
                                          const Vec& center_angles,
                                          double lambda) {
  BoundaryDistance best;
  const BoxCheck box = in_box(grid, center_angles, kHalfPi);
  if (!box.inside) {
    best.center_outside = true;
    best.face_line = box.worst_line;
    best.argmin = center_angles;
    return best;
  }

  const double gain = g_constant(lambda);
  const Mat lower = weighted_laplacian(grid, CouplingWeight::Lower);
  bool first = true;
  for (int e : lexicographic_lines(grid)) {
    for (int sign : {+1, -1}) {
      const FaceMinimum fm = face_distance(grid, center_angles, gain, lower, e, sign);
      if (first || fm.value < best.value) {
        best.value = fm.value;
        best.argmin = fm.argmin;
        best.face_line = e;
        best.face_sign = sign;
        first = false;
      }
    }
  }
  return best;
}

InverseStabilityRegion inverse_region(const GridNetwork& grid,
                                      const SystemState& center,
                                      double lambda) {
  InverseStabilityRegion region;
  region.center = center;
  region.lambda = lambda;
  region.gain = g_constant(lambda);

  const BoundaryDistance bd = min_distance_to_boundary(grid, center.angles, lambda);
  region.radius = bd.value;
  region.threshold = bd.value / 4.0;
  if (bd.center_outside) region.caveats.push_back(kCaveatCenterOutsideP);

  double kinetic = 0.0;
  for (int i = 0; i < grid.generator_count(); ++i) {
    const Bus& bus = grid.bus(grid.generators()[i]);
    kinetic += 0.5 * bus.inertia * center.gen_frequencies[i] *
               center.gen_frequencies[i];
  }
  region.kinetic_offset = kinetic;
  region.empty = kinetic >= region.threshold;

  region.lower_weights = Vec(grid.line_count());
  region.upper_weights = Vec(grid.line_count());
  for (int e = 0; e < grid.line_count(); ++e) {
    region.lower_weights[e] = grid.line(e).coupling_lo;
    region.upper_weights[e] = grid.line(e).coupling_hi;
  }
  return region;
}

Containment region_contains(const GridNetwork& grid,
                            const InverseStabilityRegion& region,
                            const Vec& ep_angles) {
  Containment c;
  const BoxCheck box = in_box(grid, ep_angles, region.lambda);
  c.in_lambda = box.inside;
  c.lambda_margin = box.margin;

  const double f = quad_upper_F(grid, region.center, ep_angles);
  c.ball_margin = region.threshold - f;
  c.in_ball = f <= region.threshold;
  c.inside = c.in_lambda && c.in_ball;
  return c;
}

EMinResult e_min_oracle(const GridNetwork& grid, const EquilibriumPoint& ep,
                        int restarts, std::uint64_t seed) {
  if (restarts < 1) throw ValidationError("e_min_oracle needs restarts >= 1");

  EMinResult best;
  bool first = true;
  for (int e : lexicographic_lines(grid)) {
    for (int sign : {+1, -1}) {
      const auto gaps = face_constraints(grid, e, sign);
      const Vec base = face_feasible_point(grid, e, sign);
      for (int r = 0; r < restarts; ++r) {
        Vec start = base;
        if (r > 0) {
          // Restart seeds depend only on (face, index), so a larger restart
          // count reruns the same starts plus new ones: the reported value
          // is monotone in restarts.
          std::mt19937_64 rng(seed ^ (static_cast<std::uint64_t>(e) << 20) ^
                              (sign > 0 ? 0u : 1u << 10) ^
                              static_cast<std::uint64_t>(r));
          std::normal_distribution<double> noise(0.0, 0.6);
          Vec perturbed = base;
          for (int k = 0; k < perturbed.size(); ++k) perturbed[k] += noise(rng);
          start = project_onto_gaps(perturbed, gaps, base);
        }
        const FaceMinimum fm = minimize_energy_on_face(grid, ep.angles, gaps, start);
        if (first || fm.value < best.value) {
          best.value = fm.value;
          best.argmin = fm.argmin;
          first = false;
        }
      }
    }
  }
  return best;
}

CertificateReport classical_certificate(const GridNetwork& grid,
                                        const SystemState& s0,
                                        const EquilibriumPoint& ep,
                                        int restarts, std::uint64_t seed) {
  CertificateReport report;
  report.method = "classical";
  report.energy_at_start = energy(grid, s0, ep);
  report.level = e_min_oracle(grid, ep, restarts, seed).value;
  report.margin = report.level - report.energy_at_start;

  const bool inside = in_box(grid, s0.angles, kHalfPi).inside;
  if (!inside) report.caveats.push_back(kCaveatCenterOutsideP);
  report.passes = inside && report.energy_at_start < report.level;
  return report;
}

CertificateReport theorem1_certificate(const GridNetwork& grid,
                                       const SystemState& s0,
                                       const EquilibriumPoint& ep,
                                       double lambda) {
  CertificateReport report;
  report.method = "theorem1";
  const InverseStabilityRegion region = inverse_region(grid, s0, lambda);
  const Containment c = region_contains(grid, region, ep.angles);
  report.energy_at_start = quad_upper_F(grid, region.center, ep.angles);
  report.level = region.threshold;
  report.margin = std::min(c.ball_margin, c.lambda_margin);
  report.caveats = region.caveats;

  const bool outside =
      std::find(region.caveats.begin(), region.caveats.end(),
                kCaveatCenterOutsideP) != region.caveats.end();
  report.passes = !outside && c.inside;
  return report;
}

}  // namespace invstab
