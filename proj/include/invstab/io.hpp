#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "invstab/certificates.hpp"
#include "invstab/control.hpp"
#include "invstab/dynamics.hpp"
#include "invstab/grid.hpp"

namespace invstab {

using Json = nlohmann::ordered_json;

/// Rounds to 12 significant digits; applied to every number that leaves the
/// process so reports are stable across platforms.
double round12(double v);

/// Injection file: JSON array of {"bus": id, "power": value}. Buses not
/// listed default to zero; duplicate entries are rejected. Balance is
/// enforced by the InjectionVector constructor.
InjectionVector load_injections(const std::filesystem::path& path,
                                const GridNetwork& grid);

/// State file: {"angles": [...], "gen_frequencies": [...]}.
SystemState load_state(const std::filesystem::path& path,
                       const GridNetwork& grid);

/// Batch file: JSON array of {"name": str, "injections": [...]}. Values are
/// returned raw so each scenario can be validated independently.
std::vector<std::pair<std::string, Vec>> load_batch(
    const std::filesystem::path& path, const GridNetwork& grid);

/// CSV columns: t, delta_1..delta_N, omega_g1..omega_gG, energy,
/// dist_target, at 12 significant digits. Energy and distance are nan when
/// the trajectory tracked no equilibrium.
void write_trajectory_csv(const std::filesystem::path& path,
                          const Trajectory& traj);

Json events_json(const Trajectory& traj);
Json region_json(const InverseStabilityRegion& region);
Json certificate_json(const CertificateReport& report);
Json plan_json(const ControlPlan& plan);
Json equilibrium_json(const EquilibriumPoint& ep);

void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace invstab
