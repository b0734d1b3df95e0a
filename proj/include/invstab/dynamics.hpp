#pragma once

#include <optional>
#include <string>
#include <vector>

#include "invstab/grid.hpp"
#include "invstab/powerflow.hpp"

namespace invstab {

/// Dynamic state: one angle per bus plus one frequency per generator
/// (ordered like GridNetwork::generators()). Load-bus frequencies are not
/// part of the state; the first-order load equation determines them
/// algebraically from the angles.
struct SystemState {
  Vec angles;
  Vec gen_frequencies;
};

/// Promotes an equilibrium to a zero-frequency state.
SystemState state_at_rest(const GridNetwork& grid, const EquilibriumPoint& ep);

/// Time derivative of a SystemState.
struct StateDerivative {
  Vec angle_rates;         // one per bus
  Vec gen_accelerations;   // one per generator
};

/// Swing/load dynamics right-hand side:
///   generators:  d(angle) = frequency,
///                m * d(frequency) = P - d * frequency - sum of line flows
///   loads:       d * d(angle) = P - sum of line flows
StateDerivative rhs(const GridNetwork& grid, const InjectionVector& p,
                    const SystemState& state);

enum class EventKind { Separation, Switch };

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::Separation;
  std::string detail;  // "4-5" for a line event, "stage-2" for a switch
};

struct Trajectory {
  std::vector<double> times;
  std::vector<SystemState> states;
  std::vector<Event> events;
  /// Filled when an equilibrium is tracked: energy relative to it and
  /// angle distance to it, aligned with times. Empty otherwise.
  std::vector<double> energy;
  std::vector<double> dist_target;
};

struct SimulateOptions {
  double horizon = 20.0;
  double step = 1e-3;            // fixed RK4 step
  int output_every = 10;         // record every k-th step
  bool detect_separation = true; // flag each line whose |gap| reaches 2*pi
  bool halt_on_separation = false;
  std::optional<EquilibriumPoint> track;  // fills energy / dist_target
};

/// Fixed-step classical Runge-Kutta integration. A separation event is
/// recorded the first time each line's unwrapped angle gap reaches 2*pi in
/// magnitude; integration then stops early only if halt_on_separation is
/// set. Throws NonFinite if the state leaves the representable range.
Trajectory simulate(const GridNetwork& grid, const InjectionVector& p,
                    const SystemState& initial,
                    const SimulateOptions& options = {});

/// Line outage. The returned network may be disconnected (fault-on
/// topology); throws UnknownLine when no such line exists. k and j are
/// 0-based bus indices in either order.
GridNetwork apply_fault(const GridNetwork& grid, int k, int j);

struct FaultScenario {
  int line_k = 0;  // tripped line, 0-based endpoints
  int line_j = 0;
  double clear_time = 0.1;
  EquilibriumPoint pre_fault_ep;
};

/// Integrates the faulted topology from the pre-fault equilibrium for
/// clear_time and returns the state at the moment the line is restored.
SystemState fault_cleared_state(const GridNetwork& grid,
                                const InjectionVector& p,
                                const FaultScenario& scenario,
                                double step = 1e-3);

/// Energy relative to an equilibrium: generator kinetic part plus the
/// closed-form line potential
///   sum over lines of a * (cos g* - cos g - sin g* * (g - g*)),
/// where g is the line's angle gap and g* its equilibrium gap.
double energy(const GridNetwork& grid, const SystemState& state,
              const EquilibriumPoint& ep);

struct DecayReport {
  double max_increment = 0.0;        // max over consecutive energy samples
  std::vector<double> dissipation;   // analytic -sum d_k * rate_k^2 per sample
};

/// Evaluates energy along a trajectory and reports the worst increase
/// between consecutive samples (zero up to integrator error for the exact
/// flow). Dissipation uses load-bus rates reconstructed from the load
/// equation, not finite differences.
DecayReport energy_decay_check(const GridNetwork& grid,
                               const InjectionVector& p,
                               const Trajectory& traj,
                               const EquilibriumPoint& ep);

/// Root-sum-square deviation of the angles-relative-to-bus-1 from the
/// equilibrium's. Invariant under uniform shifts of either argument.
double angle_distance(const Vec& angles, const Vec& ep_angles);
double angle_distance(const SystemState& state, const EquilibriumPoint& ep);

}  // namespace invstab
