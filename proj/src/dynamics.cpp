#include "invstab/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "invstab/errors.hpp"

namespace invstab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Net sinusoidal line flow out of every bus.
Vec flow_sums(const GridNetwork& grid, const Vec& angles) {
  Vec flows = Vec::Zero(grid.size());
  for (const Line& line : grid.lines()) {
    const double f =
        line.coupling * std::sin(angles[line.from] - angles[line.to]);
    flows[line.from] += f;
    flows[line.to] -= f;
  }
  return flows;
}

// Packed layout used by the integrator: [angles; generator frequencies].
Vec pack(const SystemState& state) {
  Vec y(state.angles.size() + state.gen_frequencies.size());
  y << state.angles, state.gen_frequencies;
  return y;
}

SystemState unpack(const GridNetwork& grid, const Vec& y) {
  SystemState state;
  state.angles = y.head(grid.size());
  state.gen_frequencies = y.tail(grid.generator_count());
  return state;
}

Vec packed_rhs(const GridNetwork& grid, const Vec& p, const Vec& y) {
  const int n = grid.size();
  const int g = grid.generator_count();
  const Vec angles = y.head(n);
  const Vec flows = flow_sums(grid, angles);

  Vec dy(n + g);
  for (int i = 0; i < g; ++i) {
    const int k = grid.generators()[i];
    const Bus& bus = grid.bus(k);
    const double omega = y[n + i];
    dy[k] = omega;
    dy[n + i] = (p[k] - bus.damping * omega - flows[k]) / bus.inertia;
  }
  for (int k : grid.loads()) {
    dy[k] = (p[k] - flows[k]) / grid.bus(k).damping;
  }
  return dy;
}

Vec rk4_step(const GridNetwork& grid, const Vec& p, const Vec& y, double h) {
  const Vec k1 = packed_rhs(grid, p, y);
  const Vec k2 = packed_rhs(grid, p, y + 0.5 * h * k1);
  const Vec k3 = packed_rhs(grid, p, y + 0.5 * h * k2);
  const Vec k4 = packed_rhs(grid, p, y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void check_state_sizes(const GridNetwork& grid, const SystemState& state) {
  if (state.angles.size() != grid.size() ||
      state.gen_frequencies.size() != grid.generator_count()) {
    throw ValidationError("state dimensions do not match the grid");
  }
}

}  // namespace

SystemState state_at_rest(const GridNetwork& grid, const EquilibriumPoint& ep) {
  return SystemState{ep.angles, Vec::Zero(grid.generator_count())};
}

StateDerivative rhs(const GridNetwork& grid, const InjectionVector& p,
                    const SystemState& state) {
  check_state_sizes(grid, state);
  const Vec dy = packed_rhs(grid, p.values(), pack(state));
  StateDerivative d;
  d.angle_rates = dy.head(grid.size());
  d.gen_accelerations = dy.tail(grid.generator_count());
  return d;
}

Trajectory simulate(const GridNetwork& grid, const InjectionVector& p,
                    const SystemState& initial,
                    const SimulateOptions& options) {
  check_state_sizes(grid, initial);
  if (!(options.step > 0.0) || !(options.horizon > 0.0)) {
    throw ValidationError("step and horizon must be positive");
  }
  if (options.output_every < 1) {
    throw ValidationError("output_every must be at least 1");
  }

  const long long steps = std::llround(options.horizon / options.step);
  const Vec pv = p.values();

  Trajectory traj;
  std::vector<bool> separated(grid.line_count(), false);

  const auto record = [&](double time, const Vec& y) {
    traj.times.push_back(time);
    traj.states.push_back(unpack(grid, y));
    if (options.track) {
      const SystemState& s = traj.states.back();
      traj.energy.push_back(energy(grid, s, *options.track));
      traj.dist_target.push_back(angle_distance(s, *options.track));
    }
  };

  Vec y = pack(initial);
  record(0.0, y);

  for (long long k = 1; k <= steps; ++k) {
    y = rk4_step(grid, pv, y, options.step);
    const double time = static_cast<double>(k) * options.step;
    if (!y.allFinite()) {
      throw NonFinite("state became non-finite at t = " + std::to_string(time));
    }

    bool halt = false;
    if (options.detect_separation) {
      for (int e = 0; e < grid.line_count(); ++e) {
        if (separated[e]) continue;
        const Line& line = grid.line(e);
        if (std::abs(y[line.from] - y[line.to]) >= kTwoPi) {
          separated[e] = true;
          traj.events.push_back(Event{time, EventKind::Separation,
                                      std::to_string(line.from + 1) + "-" +
                                          std::to_string(line.to + 1)});
          if (options.halt_on_separation) halt = true;
        }
      }
    }

    if (halt || k == steps || k % options.output_every == 0) {
      record(time, y);
    }
    if (halt) break;
  }
  return traj;
}

GridNetwork apply_fault(const GridNetwork& grid, int k, int j) {
  const auto idx = grid.find_line(k, j);
  if (!idx) {
    throw UnknownLine("no line " + std::to_string(k + 1) + "-" +
                      std::to_string(j + 1));
  }
  std::vector<Line> lines;
  for (int e = 0; e < grid.line_count(); ++e) {
    if (e != *idx) lines.push_back(grid.line(e));
  }
  return GridNetwork(grid.buses(), std::move(lines),
                     /*require_connected=*/false);
}

SystemState fault_cleared_state(const GridNetwork& grid,
                                const InjectionVector& p,
                                const FaultScenario& scenario, double step) {
  const GridNetwork faulted = apply_fault(grid, scenario.line_k, scenario.line_j);
  SimulateOptions options;
  options.horizon = scenario.clear_time;
  options.step = step;
  options.detect_separation = false;
  const Trajectory traj =
      simulate(faulted, p, state_at_rest(grid, scenario.pre_fault_ep), options);
  return traj.states.back();
}

double energy(const GridNetwork& grid, const SystemState& state,
              const EquilibriumPoint& ep) {
  check_state_sizes(grid, state);
  double kinetic = 0.0;
  for (int i = 0; i < grid.generator_count(); ++i) {
    const Bus& bus = grid.bus(grid.generators()[i]);
    kinetic += 0.5 * bus.inertia * state.gen_frequencies[i] *
               state.gen_frequencies[i];
  }
  double potential = 0.0;
  for (const Line& line : grid.lines()) {
    const double gap = state.angles[line.from] - state.angles[line.to];
    const double eq = ep.angles[line.from] - ep.angles[line.to];
    potential +=
        line.coupling * (std::cos(eq) - std::cos(gap) - std::sin(eq) * (gap - eq));
  }
  return kinetic + potential;
}

DecayReport energy_decay_check(const GridNetwork& grid,
                               const InjectionVector& p, const Trajectory& traj,
                               const EquilibriumPoint& ep) {
  DecayReport report;
  report.dissipation.reserve(traj.states.size());

  double previous = 0.0;
  for (size_t i = 0; i < traj.states.size(); ++i) {
    const SystemState& state = traj.states[i];
    const double e = energy(grid, state, ep);
    if (i > 0) {
      report.max_increment = std::max(report.max_increment, e - previous);
    }
    previous = e;

    // Load-bus rates come from the load equation itself, so the dissipation
    // is exact at each sample rather than a finite difference.
    const Vec flows = flow_sums(grid, state.angles);
    double diss = 0.0;
    for (int j = 0; j < grid.generator_count(); ++j) {
      const Bus& bus = grid.bus(grid.generators()[j]);
      diss += bus.damping * state.gen_frequencies[j] * state.gen_frequencies[j];
    }
    for (int k : grid.loads()) {
      const Bus& bus = grid.bus(k);
      const double rate = (p[k] - flows[k]) / bus.damping;
      diss += bus.damping * rate * rate;
    }
    report.dissipation.push_back(-diss);
  }
  return report;
}

double angle_distance(const Vec& angles, const Vec& ep_angles) {
  if (angles.size() != ep_angles.size()) {
    throw ValidationError("angle vectors differ in length");
  }
  double sum = 0.0;
  for (int i = 1; i < angles.size(); ++i) {
    const double d = (angles[i] - angles[0]) - (ep_angles[i] - ep_angles[0]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

double angle_distance(const SystemState& state, const EquilibriumPoint& ep) {
  return angle_distance(state.angles, ep.angles);
}

}  // namespace invstab
