#include "invstab/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "invstab/errors.hpp"
#include "invstab/lp.hpp"
#include "invstab/qp.hpp"

namespace invstab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_dispatch_problem(const GridNetwork& grid,
                               const DispatchProblem& problem) {
  const int n = grid.size();
  if (problem.controllable.empty()) {
    throw ValidationError("dispatch problem needs at least one controllable bus");
  }
  std::vector<char> seen(n, 0);
  for (int k : problem.controllable) {
    if (k < 0 || k >= n) throw ValidationError("controllable bus index out of range");
    if (seen[k]) throw ValidationError("duplicate controllable bus");
    seen[k] = 1;
  }
  const int nc = static_cast<int>(problem.controllable.size());
  if (problem.fixed_injections.size() != n) {
    throw ValidationError("fixed_injections must have one entry per bus");
  }
  if (problem.p_min.size() != nc || problem.p_max.size() != nc) {
    throw ValidationError("dispatch bounds must match the controllable set");
  }
  for (int c = 0; c < nc; ++c) {
    if (!(problem.p_min[c] <= problem.p_max[c])) {
      throw ValidationError("dispatch bounds must satisfy p_min <= p_max");
    }
  }
  if (!(problem.lambda > 0.0 && problem.lambda < std::numbers::pi / 2)) {
    throw ValidationError("screening bound lambda must lie in (0, pi/2)");
  }
}

SystemState rk4_advance(const GridNetwork& grid, const InjectionVector& p,
                        const SystemState& s, double h) {
  const auto blend = [](const SystemState& base, const StateDerivative& d,
                        double w) {
    return SystemState{base.angles + w * d.angle_rates,
                       base.gen_frequencies + w * d.gen_accelerations};
  };
  const StateDerivative k1 = rhs(grid, p, s);
  const StateDerivative k2 = rhs(grid, p, blend(s, k1, h / 2));
  const StateDerivative k3 = rhs(grid, p, blend(s, k2, h / 2));
  const StateDerivative k4 = rhs(grid, p, blend(s, k3, h));
  return SystemState{
      s.angles + (h / 6) * (k1.angle_rates + 2 * k2.angle_rates +
                            2 * k3.angle_rates + k4.angle_rates),
      s.gen_frequencies +
          (h / 6) * (k1.gen_accelerations + 2 * k2.gen_accelerations +
                     2 * k3.gen_accelerations + k4.gen_accelerations)};
}

bool settled(const SystemState& s, const EquilibriumPoint& ep, double tol) {
  const double worst_freq =
      s.gen_frequencies.size() ? s.gen_frequencies.cwiseAbs().maxCoeff() : 0.0;
  return angle_distance(s.angles, ep.angles) < tol && worst_freq < tol;
}

// Integrates under p until the state settles at the equilibrium. False when
// the horizon runs out or the state blows up; the caller decides whether
// that is fatal.
bool settles(const GridNetwork& grid, const InjectionVector& p,
             const SystemState& start, const EquilibriumPoint& ep, double tol,
             double horizon, double step) {
  SystemState s = start;
  const long steps = std::lround(horizon / step);
  for (long i = 0; i < steps; ++i) {
    if (settled(s, ep, tol)) return true;
    s = rk4_advance(grid, p, s, step);
    if (!s.angles.allFinite() || !s.gen_frequencies.allFinite()) return false;
  }
  return settled(s, ep, tol);
}

std::string verify_hop(const GridNetwork& grid, const SystemState& from,
                       const EquilibriumPoint& to, const InjectionVector& p,
                       double lambda, const PlannerOptions& options) {
  if (theorem1_certificate(grid, from, to, lambda).passes) return "theorem1";
  if (settles(grid, p, from, to, options.switch_tolerance,
              options.verify_horizon, options.verify_step)) {
    return "simulation";
  }
  return "";
}

}  // namespace

MinSyncResult min_sync_dispatch(const GridNetwork& grid,
                                const DispatchProblem& problem) {
  validate_dispatch_problem(grid, problem);
  const int nc = static_cast<int>(problem.controllable.size());

  Vec fixed = problem.fixed_injections;
  for (int k : problem.controllable) fixed[k] = 0.0;

  const Mat pinv = laplacian_pseudoinverse(grid);

  // Variables: the controllable injections, then the norm bound t.
  LinearProgram lp;
  lp.objective = Vec::Zero(nc + 1);
  lp.objective[nc] = 1.0;
  const int rows = 2 * grid.line_count() + 1;
  lp.constraints = Mat::Zero(rows, nc + 1);
  lp.rhs = Vec::Zero(rows);
  lp.relations.assign(rows, Relation::LessEqual);
  for (int e = 0; e < grid.line_count(); ++e) {
    const Line& line = grid.line(e);
    const Vec row = (pinv.row(line.from) - pinv.row(line.to)).transpose();
    const double offset = row.dot(fixed);
    for (int c = 0; c < nc; ++c) {
      lp.constraints(2 * e, c) = row[problem.controllable[c]];
      lp.constraints(2 * e + 1, c) = -row[problem.controllable[c]];
    }
    lp.constraints(2 * e, nc) = -1.0;
    lp.constraints(2 * e + 1, nc) = -1.0;
    lp.rhs[2 * e] = -offset;
    lp.rhs[2 * e + 1] = offset;
  }
  for (int c = 0; c < nc; ++c) lp.constraints(rows - 1, c) = 1.0;
  lp.rhs[rows - 1] = -fixed.sum();
  lp.relations[rows - 1] = Relation::Equal;

  lp.lower = Vec(nc + 1);
  lp.upper = Vec(nc + 1);
  lp.lower.head(nc) = problem.p_min;
  lp.upper.head(nc) = problem.p_max;
  lp.lower[nc] = 0.0;
  lp.upper[nc] = kInf;

  const LpResult r = solve_lp(lp);
  if (r.status == LpStatus::Infeasible) {
    throw Infeasible("no balanced dispatch inside the bounds");
  }
  if (r.status != LpStatus::Optimal) {
    throw NonConvergence("norm minimization did not reach an optimum");
  }

  Vec p = fixed;
  for (int c = 0; c < nc; ++c) p[problem.controllable[c]] = r.x[c];
  // Simplex arithmetic leaves a tiny balance residue; park it on the first
  // controllable bus so the fixed entries stay exactly as given.
  p[problem.controllable[0]] -= p.sum();

  InjectionVector injections(std::move(p));
  const double norm = edge_infinity_norm(grid, dc_approx_ep(grid, injections));
  return MinSyncResult{std::move(injections), norm};
}

SegmentStep next_ep_on_segment(const GridNetwork& grid,
                               const InverseStabilityRegion& region,
                               const Vec& target_angles) {
  if (region.empty) throw EmptyRegion("stability region is empty");
  const Vec& from = region.center.angles;
  if (target_angles.size() != from.size()) {
    throw ValidationError("target angle vector has the wrong length");
  }

  const Vec from_gaps = edge_gaps(grid, from);
  const Vec target_gaps = edge_gaps(grid, target_angles);
  const Vec delta = target_gaps - from_gaps;
  if (delta.size() == 0 || delta.cwiseAbs().maxCoeff() == 0.0) {
    return SegmentStep{target_angles, 1.0};
  }

  double t_box = kInf;
  for (int e = 0; e < grid.line_count(); ++e) {
    if (delta[e] > 0.0) {
      t_box = std::min(t_box, (region.lambda - from_gaps[e]) / delta[e]);
    } else if (delta[e] < 0.0) {
      t_box = std::min(t_box, (-region.lambda - from_gaps[e]) / delta[e]);
    }
  }

  // Ball cap, measured in the same metric as the region's boundary
  // distance so the admitted point inherits its guarantee.
  double t_ball = kInf;
  const double budget = region.threshold - region.kinetic_offset;
  const double d_full = quad_lower_D(grid, region.lambda, target_angles, from);
  if (d_full > 0.0) t_ball = std::sqrt(std::max(budget, 0.0) / d_full);

  const double t = std::clamp(std::min(t_box, t_ball), 0.0, 1.0);
  if (t == 1.0) return SegmentStep{target_angles, 1.0};
  return SegmentStep{from + t * (target_angles - from), t};
}

InjectionVector dispatch_for_ep(const GridNetwork& grid, const Vec& ep_angles) {
  if (ep_angles.size() != grid.size()) {
    throw ValidationError("angle vector has the wrong length");
  }
  Vec p = Vec::Zero(grid.size());
  for (const Line& line : grid.lines()) {
    const double flow =
        line.coupling * std::sin(ep_angles[line.from] - ep_angles[line.to]);
    p[line.from] += flow;
    p[line.to] -= flow;
  }
  return InjectionVector(std::move(p));
}

ControlPlan plan_emergency_control(const GridNetwork& grid,
                                   const SystemState& s0,
                                   const EquilibriumPoint& desired,
                                   double lambda,
                                   const DispatchProblem& problem,
                                   const PlannerOptions& options) {
  if (options.max_stages < 1) {
    throw ValidationError("max_stages must be at least 1");
  }
  if (!in_box(grid, desired.angles, lambda).inside) {
    throw ValidationError("desired equilibrium is outside the angle box");
  }

  ControlPlan plan;
  plan.desired = desired;
  plan.lambda = lambda;
  plan.switch_tolerance = options.switch_tolerance;

  // When the initial state already certifies the desired equilibrium the
  // plan is a single stage.
  {
    const InverseStabilityRegion first = inverse_region(grid, s0, lambda);
    if (!first.empty && region_contains(grid, first, desired.angles).inside) {
      plan.stages.push_back(PlanStage{desired,
                                      dispatch_for_ep(grid, desired.angles),
                                      1.0, "theorem1"});
      return plan;
    }
  }

  const MinSyncResult dispatch = min_sync_dispatch(grid, problem);
  EquilibriumPoint ep = solve_equilibrium(grid, dispatch.injections);
  if (!in_box(grid, ep.angles, lambda).inside) {
    throw Infeasible(
        "the minimum-norm dispatch has no equilibrium inside the angle box");
  }

  const std::string first_how =
      verify_hop(grid, s0, ep, dispatch.injections, lambda, options);
  if (first_how.empty()) {
    throw FirstStageUncertified(
        "the initial state could not be driven to the first equilibrium");
  }
  plan.stages.push_back(PlanStage{ep, dispatch.injections, 0.0, first_how});

  double dist = angle_distance(ep.angles, desired.angles);
  while (true) {
    const SystemState rest = state_at_rest(grid, ep);
    const InverseStabilityRegion region = inverse_region(grid, rest, lambda);
    if (region.empty) throw EmptyRegion("a stage produced an empty region");

    if (region_contains(grid, region, desired.angles).inside) {
      if (static_cast<int>(plan.stages.size()) + 1 > options.max_stages) {
        throw StageLimitExceeded("stage limit reached before the desired equilibrium");
      }
      // Containment just verified is exactly the certificate for this hop.
      plan.stages.push_back(PlanStage{desired,
                                      dispatch_for_ep(grid, desired.angles),
                                      1.0, "theorem1"});
      break;
    }

    if (static_cast<int>(plan.stages.size()) + 1 > options.max_stages) {
      throw StageLimitExceeded("stage limit reached before the desired equilibrium");
    }

    const SegmentStep step = next_ep_on_segment(grid, region, desired.angles);
    EquilibriumPoint next;
    next.angles = step.next_angles;
    InjectionVector injections = dispatch_for_ep(grid, step.next_angles);
    next.residual =
        power_mismatch(grid, injections, next.angles).cwiseAbs().maxCoeff();

    const double next_dist = angle_distance(next.angles, desired.angles);
    if (!(next_dist < dist)) {
      throw StageLimitExceeded(
          "planner stalled before reaching the desired equilibrium");
    }

    const std::string how =
        verify_hop(grid, rest, next, injections, lambda, options);
    if (how.empty()) {
      throw StageUncertified("a stage hop could not be verified");
    }
    plan.stages.push_back(PlanStage{next, std::move(injections), step.t, how});
    ep = next;
    dist = next_dist;
  }
  return plan;
}

Trajectory execute_plan(const GridNetwork& grid, const SystemState& s0,
                        const ControlPlan& plan, const ExecuteOptions& options) {
  if (plan.stages.empty()) throw ValidationError("plan has no stages");
  if (!(options.step > 0.0) || !(options.horizon_per_stage > 0.0) ||
      options.output_every < 1) {
    throw ValidationError("invalid execution options");
  }

  Trajectory traj;
  SystemState s = s0;
  long total_steps = 0;
  const long stage_steps = std::lround(options.horizon_per_stage / options.step);

  const auto record = [&](size_t stage) {
    const double t = static_cast<double>(total_steps) * options.step;
    if (!traj.times.empty() && traj.times.back() == t) return;
    traj.times.push_back(t);
    traj.states.push_back(s);
    traj.energy.push_back(energy(grid, s, plan.stages[stage].ep));
    traj.dist_target.push_back(angle_distance(s.angles, plan.desired.angles));
  };

  for (size_t k = 0; k < plan.stages.size(); ++k) {
    const PlanStage& stage = plan.stages[k];
    if (k == 0) record(k);
    bool switched = false;
    for (long i = 0; i <= stage_steps; ++i) {
      if (settled(s, stage.ep, plan.switch_tolerance)) {
        switched = true;
        break;
      }
      if (i == stage_steps) break;
      s = rk4_advance(grid, stage.injections, s, options.step);
      ++total_steps;
      if (!s.angles.allFinite() || !s.gen_frequencies.allFinite()) {
        throw NonFinite("state diverged during plan execution");
      }
      if ((i + 1) % options.output_every == 0) record(k);
    }
    if (!switched) {
      throw StageTimeout("stage " + std::to_string(k + 1) +
                         " did not settle within its horizon");
    }
    traj.events.push_back(Event{static_cast<double>(total_steps) * options.step,
                                EventKind::Switch,
                                "stage-" + std::to_string(k + 1)});
    record(k);
  }
  return traj;
}

namespace {

Vec generation_injections(const GridNetwork& grid, const Vec& angles) {
  Vec p = Vec::Zero(grid.size());
  for (const Line& line : grid.lines()) {
    const double flow =
        line.coupling * std::sin(angles[line.from] - angles[line.to]);
    p[line.from] += flow;
    p[line.to] -= flow;
  }
  return p;
}

double generation_cost(const GridNetwork& grid, const SopfProblem& problem,
                       const Vec& angles) {
  const Vec p = generation_injections(grid, angles);
  double cost = 0.0;
  for (int g = 0; g < grid.generator_count(); ++g) {
    const double pg = p[grid.generators()[g]];
    cost += problem.cost_c2[g] * pg * pg + problem.cost_c1[g] * pg +
            problem.cost_c0[g];
  }
  return cost;
}

Vec cost_gradient(const GridNetwork& grid, const SopfProblem& problem,
                  const Vec& angles) {
  const Vec p = generation_injections(grid, angles);
  std::vector<int> gen_index(grid.size(), -1);
  for (int g = 0; g < grid.generator_count(); ++g) {
    gen_index[grid.generators()[g]] = g;
  }
  Vec grad = Vec::Zero(grid.size());
  for (const Line& line : grid.lines()) {
    const double stiff =
        line.coupling * std::cos(angles[line.from] - angles[line.to]);
    if (const int g = gen_index[line.from]; g >= 0) {
      const double w = 2.0 * problem.cost_c2[g] * p[line.from] + problem.cost_c1[g];
      grad[line.from] += w * stiff;
      grad[line.to] -= w * stiff;
    }
    if (const int g = gen_index[line.to]; g >= 0) {
      const double w = 2.0 * problem.cost_c2[g] * p[line.to] + problem.cost_c1[g];
      grad[line.to] += w * stiff;
      grad[line.from] -= w * stiff;
    }
  }
  return grad;
}

struct FeasibleSet {
  std::vector<GapConstraint> gaps;
  Mat ball_hessian;  // upper-coupling Laplacian
  Vec ball_center;   // angles of the region center
  double budget = 0.0;
};

double ball_value(const FeasibleSet& set, const Vec& y) {
  const Vec d = y - set.ball_center;
  return 0.5 * d.dot(set.ball_hessian * d);
}

// Exact projection onto {gap box} intersected with the quadratic ball, via
// a bisection on the ball multiplier; each inner problem is a box QP.
Vec project_feasible(const FeasibleSet& set, const Vec& z,
                     const Vec& feasible_start) {
  Vec start = feasible_start;
  start.array() += z.mean() - start.mean();

  const int n = static_cast<int>(z.size());
  const Mat identity = Mat::Identity(n, n);
  const QpResult box_only = solve_gap_qp(identity, -z, set.gaps, start);
  if (!box_only.converged) throw NonConvergence("projection did not converge");
  if (ball_value(set, box_only.x) <= set.budget) return box_only.x;

  const auto solve_at = [&](double nu) {
    const Mat q = identity + nu * set.ball_hessian;
    const Vec lin = -(z + nu * (set.ball_hessian * set.ball_center));
    const QpResult r = solve_gap_qp(q, lin, set.gaps, start);
    if (!r.converged) throw NonConvergence("projection did not converge");
    return r.x;
  };

  double lo = 0.0;
  double hi = 1.0;
  Vec y_hi = solve_at(hi);
  for (int grow = 0; grow < 80 && ball_value(set, y_hi) > set.budget; ++grow) {
    lo = hi;
    hi *= 4.0;
    y_hi = solve_at(hi);
  }
  Vec best = y_hi;
  for (int it = 0; it < 90; ++it) {
    const double mid = 0.5 * (lo + hi);
    const Vec y = solve_at(mid);
    if (ball_value(set, y) <= set.budget) {
      best = y;
      hi = mid;
    } else {
      lo = mid;
    }
    if (hi - lo <= 1e-13 * hi) break;
  }
  return best;
}

}  // namespace

SopfResult sopf_dispatch(const GridNetwork& grid, const SopfProblem& problem,
                         const SopfOptions& options) {
  const int ng = grid.generator_count();
  if (problem.cost_c2.size() != ng || problem.cost_c1.size() != ng ||
      problem.cost_c0.size() != ng) {
    throw ValidationError("cost coefficients must match the generator count");
  }
  if (ng > 0 && problem.cost_c2.minCoeff() < 0.0) {
    throw ValidationError("quadratic cost coefficients must be nonnegative");
  }
  if (problem.thermal_limits.size() != grid.line_count()) {
    throw ValidationError("thermal limits must match the line count");
  }
  for (int e = 0; e < grid.line_count(); ++e) {
    if (!(problem.thermal_limits[e] > 0.0)) {
      throw ValidationError("thermal limits must be positive");
    }
  }

  const InverseStabilityRegion region =
      inverse_region(grid, problem.start, problem.lambda);
  if (region.empty) {
    throw Infeasible("the stability region of the start state is empty");
  }

  FeasibleSet set;
  set.ball_hessian = weighted_laplacian(grid, CouplingWeight::Upper);
  set.ball_center = problem.start.angles;
  set.budget = region.threshold - region.kinetic_offset;
  for (int e = 0; e < grid.line_count(); ++e) {
    const Line& line = grid.line(e);
    double bound = problem.lambda;
    if (problem.thermal_limits[e] < line.coupling) {
      bound = std::min(bound, std::asin(problem.thermal_limits[e] / line.coupling));
    }
    set.gaps.push_back(GapConstraint{line.from, line.to, -bound, bound});
  }

  // Feasibility: the box point closest to the ball center (in the ball
  // metric) decides whether box and ball intersect, and seeds the descent.
  const QpResult seed = solve_gap_qp(
      set.ball_hessian, -(set.ball_hessian * set.ball_center), set.gaps,
      Vec::Zero(grid.size()));
  if (!seed.converged) throw NonConvergence("feasibility solve did not converge");
  if (ball_value(set, seed.x) > set.budget + 1e-12 * std::max(1.0, set.budget)) {
    throw Infeasible("angle limits exclude the stability region");
  }

  Vec y = seed.x;
  double cost = generation_cost(grid, problem, y);
  double step = 1.0;
  int iter = 0;
  bool stationary = false;
  for (; iter < options.max_iterations; ++iter) {
    const Vec grad = cost_gradient(grid, problem, y);
    Vec trial = project_feasible(set, y - step * grad, y);
    if ((trial - y).cwiseAbs().maxCoeff() <= options.stationarity_tol * step) {
      stationary = true;
      break;
    }
    double trial_cost = generation_cost(grid, problem, trial);
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      const double decrease = (trial - y).squaredNorm() / step;
      if (trial_cost <= cost - 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
      trial = project_feasible(set, y - step * grad, y);
      if ((trial - y).cwiseAbs().maxCoeff() <= options.stationarity_tol * step) {
        stationary = true;
        break;
      }
      trial_cost = generation_cost(grid, problem, trial);
    }
    if (stationary) break;
    if (!accepted) {
      throw NotConverged("line search failed to make progress");
    }
    y = trial;
    cost = trial_cost;
    step = std::min(step * 1.3, 1e3);
  }
  if (!stationary) {
    throw NotConverged("dispatch optimizer hit its iteration cap");
  }

  InjectionVector injections = dispatch_for_ep(grid, y);
  EquilibriumPoint ep{y, power_mismatch(grid, injections, y).cwiseAbs().maxCoeff()};
  const double final_cost = generation_cost(grid, problem, y);
  return SopfResult{std::move(ep), std::move(injections), final_cost, iter};
}

}  // namespace invstab
