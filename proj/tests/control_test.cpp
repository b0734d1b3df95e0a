#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "doctest.h"

#include "invstab/certificates.hpp"
#include "invstab/control.hpp"
#include "invstab/dynamics.hpp"
#include "invstab/errors.hpp"
#include "invstab/powerflow.hpp"

#include "test_util.hpp"

using namespace invstab;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

GridNetwork two_bus() {
  Bus gen;
  gen.id = 1;
  gen.kind = BusKind::Generator;
  gen.voltage = 1.0;
  gen.inertia = 0.1;
  gen.damping = 0.05;
  Bus ld;
  ld.id = 2;
  ld.voltage = 1.0;
  ld.damping = 0.05;
  Line line;
  line.from = 0;
  line.to = 1;
  line.susceptance = 1.0;
  line.coupling_lo = std::nan("");
  line.coupling_hi = std::nan("");
  return GridNetwork({gen, ld}, {line});
}

Vec pair_angles(double gap) {
  Vec x(2);
  x << gap / 2, -gap / 2;
  return x;
}

SystemState rest2(double gap) {
  SystemState s;
  s.angles = pair_angles(gap);
  s.gen_frequencies = Vec::Zero(1);
  return s;
}

InjectionVector transfer(double p) {
  Vec v(2);
  v << p, -p;
  return InjectionVector(v);
}

DispatchProblem one_controllable(double fixed_load, double lo, double hi,
                                 double lambda) {
  DispatchProblem problem;
  problem.controllable = {0};
  problem.fixed_injections = Vec::Zero(2);
  problem.fixed_injections[1] = fixed_load;
  problem.p_min = Vec::Constant(1, lo);
  problem.p_max = Vec::Constant(1, hi);
  problem.lambda = lambda;
  return problem;
}

}  // namespace

TEST_CASE("dispatch validation rejects malformed problems") {
  const GridNetwork grid = two_bus();
  DispatchProblem problem = one_controllable(-0.4, 0.0, 1.0, 1.0);

  DispatchProblem empty = problem;
  empty.controllable = {};
  CHECK_THROWS_AS(min_sync_dispatch(grid, empty), ValidationError);

  DispatchProblem dup = problem;
  dup.controllable = {0, 0};
  dup.p_min = Vec::Constant(2, 0.0);
  dup.p_max = Vec::Constant(2, 1.0);
  CHECK_THROWS_AS(min_sync_dispatch(grid, dup), ValidationError);

  DispatchProblem out_of_range = problem;
  out_of_range.controllable = {5};
  CHECK_THROWS_AS(min_sync_dispatch(grid, out_of_range), ValidationError);

  DispatchProblem crossed = problem;
  crossed.p_min[0] = 2.0;
  CHECK_THROWS_AS(min_sync_dispatch(grid, crossed), ValidationError);

  DispatchProblem bad_lambda = problem;
  bad_lambda.lambda = kPi / 2;
  CHECK_THROWS_AS(min_sync_dispatch(grid, bad_lambda), ValidationError);
}

TEST_CASE("single-line dispatch is forced by the balance constraint") {
  const GridNetwork grid = two_bus();
  // holding the load at -0.4 leaves p1 = 0.4; the dc gap doubles the
  // per-bus pseudoinverse entries, so the achieved norm is 0.4
  const MinSyncResult res =
      min_sync_dispatch(grid, one_controllable(-0.4, 0.0, 1.0, 1.0));
  CHECK(res.injections[0] == doctest::Approx(0.4).epsilon(1e-10));
  CHECK(res.injections[1] == doctest::Approx(-0.4).epsilon(1e-10));
  CHECK(res.norm == doctest::Approx(0.4).epsilon(1e-10));
}

TEST_CASE("fully controllable dispatch can zero the network stress") {
  const GridNetwork grid = two_bus();
  DispatchProblem problem;
  problem.controllable = {0, 1};
  problem.fixed_injections = Vec::Zero(2);
  problem.p_min = Vec::Constant(2, -1.0);
  problem.p_max = Vec::Constant(2, 1.0);
  problem.lambda = 1.0;
  const MinSyncResult res = min_sync_dispatch(grid, problem);
  CHECK(res.norm == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("dispatch outside the bounds is infeasible") {
  const GridNetwork grid = two_bus();
  CHECK_THROWS_AS(min_sync_dispatch(grid, one_controllable(-2.0, 0.0, 1.0, 1.0)),
                  Infeasible);
}

TEST_CASE("equilibrium injections invert the flow equations") {
  const GridNetwork grid = two_bus();
  Vec angles(2);
  angles << kPi / 6, 0.0;
  const InjectionVector p = dispatch_for_ep(grid, angles);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(power_mismatch(grid, p, angles).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("segment walk caps at the lambda box") {
  const GridNetwork grid = two_bus();
  const InverseStabilityRegion region = inverse_region(grid, rest2(0.0), 0.6);
  const SegmentStep step = next_ep_on_segment(grid, region, pair_angles(1.2));
  CHECK(step.t == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(step.next_angles[0] - step.next_angles[1] ==
        doctest::Approx(0.6).epsilon(1e-10));
}

TEST_CASE("segment walk caps at the energy ball") {
  const GridNetwork grid = two_bus();
  const InverseStabilityRegion region = inverse_region(grid, rest2(0.0), 1.5);
  const SegmentStep step = next_ep_on_segment(grid, region, pair_angles(1.4));
  // the ball in the boundary metric always reaches halfway to the pi/2
  // face, independently of lambda: t = (pi/4) / 1.4
  CHECK(step.t == doctest::Approx(0.5609986881410345).epsilon(1e-10));
  CHECK(step.next_angles[0] - step.next_angles[1] ==
        doctest::Approx(kPi / 4).epsilon(1e-10));
}

TEST_CASE("short and empty segments return the target") {
  const GridNetwork grid = two_bus();
  const InverseStabilityRegion region = inverse_region(grid, rest2(0.0), 1.5);

  const SegmentStep inside = next_ep_on_segment(grid, region, pair_angles(0.2));
  CHECK(inside.t == 1.0);
  CHECK((inside.next_angles - pair_angles(0.2)).cwiseAbs().maxCoeff() == 0.0);

  const SegmentStep still = next_ep_on_segment(grid, region, region.center.angles);
  CHECK(still.t == 1.0);

  SystemState violent = rest2(0.0);
  violent.gen_frequencies[0] = 5.0;
  const InverseStabilityRegion empty = inverse_region(grid, violent, 1.5);
  REQUIRE(empty.empty);
  CHECK_THROWS_AS(next_ep_on_segment(grid, empty, pair_angles(0.2)), EmptyRegion);
}

TEST_CASE("certifiable recovery produces a two-stage plan") {
  const GridNetwork grid = two_bus();
  const EquilibriumPoint desired = solve_equilibrium(grid, transfer(0.5));
  const DispatchProblem problem = one_controllable(-0.3, 0.0, 1.0, 1.0);

  const ControlPlan plan =
      plan_emergency_control(grid, rest2(0.8), desired, 1.0, problem);
  REQUIRE(plan.stages.size() == 2);
  // first stage holds the forced dispatch, second lands on the target
  CHECK(plan.stages[0].injections[0] == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(plan.stages[0].t == 0.0);
  CHECK(plan.stages[1].t == 1.0);
  CHECK(plan.stages[1].verification == "theorem1");
  CHECK(angle_distance(plan.stages[1].ep.angles, desired.angles) <= 1e-12);
  CHECK(plan.lambda == 1.0);

  // distances to the target decrease stage over stage
  CHECK(angle_distance(plan.stages[0].ep.angles, desired.angles) >
        angle_distance(plan.stages[1].ep.angles, desired.angles));
}

TEST_CASE("uncertifiable first hop falls back to simulation") {
  const GridNetwork grid = two_bus();
  const EquilibriumPoint desired = solve_equilibrium(grid, transfer(0.5));
  const DispatchProblem problem = one_controllable(-0.3, 0.0, 1.0, 1.0);

  // start outside the pi/2 box but on the attracting side of the ridge
  const ControlPlan plan =
      plan_emergency_control(grid, rest2(2.0), desired, 1.0, problem);
  REQUIRE(!plan.stages.empty());
  CHECK(plan.stages[0].verification == "simulation");
}

TEST_CASE("hopeless first hop raises FirstStageUncertified") {
  const GridNetwork grid = two_bus();
  const EquilibriumPoint desired = solve_equilibrium(grid, transfer(0.5));
  const DispatchProblem problem = one_controllable(-0.3, 0.0, 1.0, 1.0);
  // starting at rest past the unstable companion equilibrium
  // (pi - asin(0.3) ~ 2.837), the machine rolls away; neither the region
  // test nor the simulation can validate the hop
  CHECK_THROWS_AS(
      plan_emergency_control(grid, rest2(2.9), desired, 1.0, problem),
      FirstStageUncertified);
}

TEST_CASE("stage budget is enforced") {
  const GridNetwork grid = two_bus();
  const EquilibriumPoint desired = solve_equilibrium(grid, transfer(0.5));
  const DispatchProblem problem = one_controllable(-0.3, 0.0, 1.0, 1.0);
  PlannerOptions options;
  options.max_stages = 1;
  CHECK_THROWS_AS(
      plan_emergency_control(grid, rest2(0.8), desired, 1.0, problem, options),
      StageLimitExceeded);
}

TEST_CASE("desired equilibrium must sit inside the lambda box") {
  const GridNetwork grid = two_bus();
  const EquilibriumPoint desired = solve_equilibrium(grid, transfer(0.5));
  const DispatchProblem problem = one_controllable(-0.3, 0.0, 1.0, 1.0);
  CHECK_THROWS_AS(
      plan_emergency_control(grid, rest2(0.1), desired, 0.4, problem),
      ValidationError);
}

TEST_CASE("plan execution settles each stage and records the switches") {
  const GridNetwork grid = two_bus();
  const EquilibriumPoint desired = solve_equilibrium(grid, transfer(0.5));
  const DispatchProblem problem = one_controllable(-0.3, 0.0, 1.0, 1.0);
  const SystemState s0 = rest2(0.8);
  const ControlPlan plan = plan_emergency_control(grid, s0, desired, 1.0, problem);

  const Trajectory traj = execute_plan(grid, s0, plan);
  REQUIRE(!traj.times.empty());
  REQUIRE(traj.events.size() == plan.stages.size());
  for (size_t k = 0; k < traj.events.size(); ++k) {
    CHECK(traj.events[k].kind == EventKind::Switch);
    CHECK(traj.events[k].detail == "stage-" + std::to_string(k + 1));
  }
  CHECK(angle_distance(traj.states.back(), desired) <= plan.switch_tolerance);
  CHECK(traj.dist_target.back() <= plan.switch_tolerance);

  ExecuteOptions hurried;
  hurried.horizon_per_stage = 0.01;
  CHECK_THROWS_AS(execute_plan(grid, s0, plan, hurried), StageTimeout);
}

TEST_CASE("dispatch optimization reaches the unconstrained minimum") {
  const GridNetwork grid = two_bus();
  SopfProblem problem;
  problem.start = rest2(0.0);
  problem.lambda = 1.0;
  problem.cost_c2 = Vec::Constant(1, 1.0);
  problem.cost_c1 = Vec::Zero(1);
  problem.cost_c0 = Vec::Zero(1);
  problem.thermal_limits = Vec::Constant(1, kInf);
  const SopfResult res = sopf_dispatch(grid, problem);
  CHECK(res.cost <= 1e-10);
  CHECK(std::abs(res.ep.angles[0] - res.ep.angles[1]) <= 1e-5);
  CHECK(res.ep.residual <= 1e-9);
}

TEST_CASE("dispatch optimization stops at the stability ball") {
  const GridNetwork grid = two_bus();
  SopfProblem problem;
  problem.start = rest2(std::asin(0.5));
  problem.lambda = 1.0;
  problem.cost_c2 = Vec::Constant(1, 1.0);
  problem.cost_c1 = Vec::Zero(1);
  problem.cost_c0 = Vec::Zero(1);
  problem.thermal_limits = Vec::Constant(1, kInf);
  const SopfResult res = sopf_dispatch(grid, problem);
  // cheapest admissible equilibrium sits on the near edge of the ball
  const double gap = res.ep.angles[0] - res.ep.angles[1];
  CHECK(gap == doctest::Approx(0.247660199863699).epsilon(2e-4));
  CHECK(res.cost == doctest::Approx(0.06009176766989571).epsilon(1e-5));
  // membership is exact
  const InverseStabilityRegion region =
      inverse_region(grid, problem.start, problem.lambda);
  const Containment where = region_contains(grid, region, res.ep.angles);
  CHECK(where.lambda_margin >= -1e-9);
  CHECK(where.ball_margin >= -1e-9);
}

TEST_CASE("dispatch optimization respects thermal limits exactly") {
  const GridNetwork grid = two_bus();
  SopfProblem problem;
  problem.start = rest2(std::asin(0.5));
  problem.lambda = 1.0;
  problem.cost_c2 = Vec::Constant(1, 1.0);
  problem.cost_c1 = Vec::Constant(1, -2.0);  // rewards generation up to p = 1
  problem.cost_c0 = Vec::Zero(1);
  problem.thermal_limits = Vec::Constant(1, 0.4);
  const SopfResult res = sopf_dispatch(grid, problem);
  const double flow = std::sin(res.ep.angles[0] - res.ep.angles[1]);
  CHECK(std::abs(flow) <= 0.4 + 1e-9);
  CHECK(flow == doctest::Approx(0.4).epsilon(1e-7));
  CHECK(res.cost == doctest::Approx(-0.64).epsilon(1e-6));
}

TEST_CASE("dispatch optimization around an uncertifiable state is infeasible") {
  const GridNetwork grid = two_bus();
  SopfProblem problem;
  problem.start = rest2(2.2);
  problem.lambda = 1.0;
  problem.cost_c2 = Vec::Constant(1, 1.0);
  problem.cost_c1 = Vec::Zero(1);
  problem.cost_c0 = Vec::Zero(1);
  problem.thermal_limits = Vec::Constant(1, kInf);
  CHECK_THROWS_AS(sopf_dispatch(grid, problem), Infeasible);
}

TEST_CASE("dispatch optimization validates its cost vectors") {
  const GridNetwork grid = two_bus();
  SopfProblem problem;
  problem.start = rest2(0.0);
  problem.lambda = 1.0;
  problem.cost_c2 = Vec::Constant(2, 1.0);  // grid has a single generator
  problem.cost_c1 = Vec::Zero(1);
  problem.cost_c0 = Vec::Zero(1);
  problem.thermal_limits = Vec::Constant(1, kInf);
  CHECK_THROWS_AS(sopf_dispatch(grid, problem), ValidationError);
}
