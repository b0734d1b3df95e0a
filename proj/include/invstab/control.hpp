#pragma once

#include <string>
#include <vector>

#include "invstab/certificates.hpp"
#include "invstab/dynamics.hpp"
#include "invstab/grid.hpp"
#include "invstab/powerflow.hpp"

namespace invstab {

/// Which injections may be re-dispatched and inside which bounds. Entries of
/// fixed_injections at controllable buses are ignored.
struct DispatchProblem {
  std::vector<int> controllable;  // 0-based bus indices, distinct
  Vec fixed_injections;           // length N
  Vec p_min;                      // per controllable bus, -inf allowed
  Vec p_max;                      //                       +inf allowed
  double lambda = 0.0;            // box the dispatch is screened against
};

struct MinSyncResult {
  InjectionVector injections;
  double norm;  // achieved edge-infinity norm of the DC angle estimate
};

/// Picks controllable injections minimizing the edge-infinity norm of the
/// DC angle estimate, subject to balance and bounds. Linear program solved
/// by the dense simplex. Throws Infeasible when balance cannot be met
/// inside the bounds.
MinSyncResult min_sync_dispatch(const GridNetwork& grid,
                                const DispatchProblem& problem);

struct SegmentStep {
  Vec next_angles;
  double t = 0.0;  // fraction of the segment retained
};

/// Walks from the region's center equilibrium toward target_angles and
/// stops at the largest point of the segment still inside the region:
/// t is capped by the lambda box, by the quadratic ball of radius
/// threshold measured in the same metric that defines the region's
/// boundary distance, and by 1. A zero-length segment returns t = 1.
SegmentStep next_ep_on_segment(const GridNetwork& grid,
                               const InverseStabilityRegion& region,
                               const Vec& target_angles);

/// Injections for which the given angles are an exact equilibrium (sum of
/// sinusoidal line flows at every bus).
InjectionVector dispatch_for_ep(const GridNetwork& grid, const Vec& ep_angles);

struct PlanStage {
  EquilibriumPoint ep;
  InjectionVector injections;
  double t = 0.0;            // segment fraction that produced this stage
  std::string verification;  // "theorem1" or "simulation"
};

struct ControlPlan {
  std::vector<PlanStage> stages;  // executed in order; last stage is desired
  EquilibriumPoint desired;
  double lambda = 0.0;
  double switch_tolerance = 0.0;
};

struct PlannerOptions {
  int max_stages = 10;
  double switch_tolerance = 1e-2;
  // Simulation fallback used when a stage hop cannot be certified.
  double verify_horizon = 80.0;
  double verify_step = 1e-3;
};

/// Staged recovery plan: a first synchronizing dispatch (minimum DC-norm),
/// then intermediate equilibria walked along the segment toward the desired
/// equilibrium, each inside the stability region of its predecessor.
/// Every hop is certified by the region certificate when possible and
/// otherwise validated by simulating the hop to convergence; the method
/// used is recorded per stage.
ControlPlan plan_emergency_control(const GridNetwork& grid,
                                   const SystemState& s0,
                                   const EquilibriumPoint& desired,
                                   double lambda,
                                   const DispatchProblem& problem,
                                   const PlannerOptions& options = {});

struct ExecuteOptions {
  double step = 1e-3;
  double horizon_per_stage = 80.0;
  int output_every = 10;
};

/// Runs the plan from s0: each stage's injections are applied until the
/// state is within switch_tolerance of the stage equilibrium (angle
/// distance and every generator frequency), then the next stage takes
/// over. A switch event is recorded at each handover. Throws StageTimeout
/// if a stage fails to settle within its horizon. The trajectory tracks
/// energy against the active stage and distance against the desired
/// equilibrium.
Trajectory execute_plan(const GridNetwork& grid, const SystemState& s0,
                        const ControlPlan& plan,
                        const ExecuteOptions& options = {});

/// Security-constrained dispatch around a disturbed state.
struct SopfProblem {
  SystemState start;   // region center
  double lambda = 0.0;
  Vec cost_c2;         // per generator (ordered like grid.generators())
  Vec cost_c1;
  Vec cost_c0;
  Vec thermal_limits;  // per line, +inf for unconstrained
};

struct SopfOptions {
  int max_iterations = 20000;
  double stationarity_tol = 1e-6;
};

struct SopfResult {
  EquilibriumPoint ep;  // optimizing equilibrium (exact by construction)
  InjectionVector injections;
  double cost = 0.0;
  int iterations = 0;
};

/// Minimizes the quadratic generation cost over equilibria parametrized by
/// their angles, constrained to the inverse stability region of the start
/// state and to per-line thermal limits |a * sin(gap)| <= limit. Projected
/// gradient descent; the projection handles the angle boxes exactly and the
/// quadratic ball by a multiplier search. Throws Infeasible when the
/// constraint set is empty and NotConverged past the iteration cap.
SopfResult sopf_dispatch(const GridNetwork& grid, const SopfProblem& problem,
                         const SopfOptions& options = {});

}  // namespace invstab
