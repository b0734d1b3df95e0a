#include "invstab/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <string>

#include "invstab/errors.hpp"

namespace invstab {

double round12(double v) {
  if (!std::isfinite(v) || v == 0.0) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.11e", v);
  return std::strtod(buf, nullptr);
}

namespace {

Json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

double number_field(const Json& obj, const std::string& key,
                    const std::string& where) {
  if (!obj.contains(key)) throw ParseError(where + ": missing \"" + key + "\"");
  if (!obj[key].is_number()) {
    throw ParseError(where + ": \"" + key + "\" must be a number");
  }
  return obj[key].get<double>();
}

Vec number_array(const Json& arr, const std::string& where) {
  if (!arr.is_array()) throw ParseError(where + " must be an array");
  Vec v(static_cast<Eigen::Index>(arr.size()));
  Eigen::Index k = 0;
  for (const auto& item : arr) {
    if (!item.is_number()) throw ParseError(where + " must hold numbers only");
    v[k++] = item.get<double>();
  }
  return v;
}

Json vec_json(const Vec& v) {
  Json arr = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) arr.push_back(round12(v[k]));
  return arr;
}

void print_value(std::ofstream& out, double v) {
  if (std::isnan(v)) {
    out << "nan";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.11e", v);
  out << buf;
}

}  // namespace

InjectionVector load_injections(const std::filesystem::path& path,
                                const GridNetwork& grid) {
  const Json doc = parse_file(path);
  if (!doc.is_array()) {
    throw ParseError(path.string() + ": injection file must be a JSON array");
  }
  Vec p = Vec::Zero(grid.size());
  std::set<int> seen;
  for (const auto& entry : doc) {
    if (!entry.is_object()) {
      throw ParseError(path.string() + ": injection entries must be objects");
    }
    for (const auto& item : entry.items()) {
      if (item.key() != "bus" && item.key() != "power") {
        throw ParseError(path.string() + ": unknown key \"" + item.key() + "\"");
      }
    }
    if (!entry.contains("bus") || !entry["bus"].is_number_integer()) {
      throw ParseError(path.string() + ": \"bus\" must be an integer id");
    }
    const int id = entry["bus"].get<int>();
    if (id < 1 || id > grid.size()) {
      throw ParseError(path.string() + ": bus id " + std::to_string(id) +
                       " out of range");
    }
    if (!seen.insert(id).second) {
      throw ParseError(path.string() + ": duplicate entry for bus " +
                       std::to_string(id));
    }
    p[id - 1] = number_field(entry, "power", path.string());
  }
  return InjectionVector(std::move(p));
}

SystemState load_state(const std::filesystem::path& path,
                       const GridNetwork& grid) {
  const Json doc = parse_file(path);
  if (!doc.is_object()) {
    throw ParseError(path.string() + ": state file must be a JSON object");
  }
  for (const auto& item : doc.items()) {
    if (item.key() != "angles" && item.key() != "gen_frequencies") {
      throw ParseError(path.string() + ": unknown key \"" + item.key() + "\"");
    }
  }
  if (!doc.contains("angles") || !doc.contains("gen_frequencies")) {
    throw ParseError(path.string() +
                     ": state file needs \"angles\" and \"gen_frequencies\"");
  }
  SystemState state{number_array(doc["angles"], path.string() + ": angles"),
                    number_array(doc["gen_frequencies"],
                                 path.string() + ": gen_frequencies")};
  if (state.angles.size() != grid.size()) {
    throw ParseError(path.string() + ": expected " +
                     std::to_string(grid.size()) + " angles");
  }
  if (state.gen_frequencies.size() != grid.generator_count()) {
    throw ParseError(path.string() + ": expected " +
                     std::to_string(grid.generator_count()) +
                     " generator frequencies");
  }
  return state;
}

std::vector<std::pair<std::string, Vec>> load_batch(
    const std::filesystem::path& path, const GridNetwork& grid) {
  const Json doc = parse_file(path);
  if (!doc.is_array()) {
    throw ParseError(path.string() + ": batch file must be a JSON array");
  }
  std::vector<std::pair<std::string, Vec>> batch;
  std::set<std::string> names;
  for (const auto& entry : doc) {
    if (!entry.is_object()) {
      throw ParseError(path.string() + ": batch entries must be objects");
    }
    for (const auto& item : entry.items()) {
      if (item.key() != "name" && item.key() != "injections") {
        throw ParseError(path.string() + ": unknown key \"" + item.key() + "\"");
      }
    }
    if (!entry.contains("name") || !entry["name"].is_string()) {
      throw ParseError(path.string() + ": batch entries need a string \"name\"");
    }
    const std::string name = entry["name"].get<std::string>();
    if (!names.insert(name).second) {
      throw ParseError(path.string() + ": duplicate scenario \"" + name + "\"");
    }
    if (!entry.contains("injections")) {
      throw ParseError(path.string() + ": scenario \"" + name +
                       "\" needs \"injections\"");
    }
    Vec p = number_array(entry["injections"], path.string() + ": " + name);
    if (p.size() != grid.size()) {
      throw ParseError(path.string() + ": scenario \"" + name + "\" needs " +
                       std::to_string(grid.size()) + " injections");
    }
    batch.emplace_back(name, std::move(p));
  }
  return batch;
}

void write_trajectory_csv(const std::filesystem::path& path,
                          const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());

  const Eigen::Index n = traj.states.empty() ? 0 : traj.states[0].angles.size();
  const Eigen::Index g =
      traj.states.empty() ? 0 : traj.states[0].gen_frequencies.size();
  out << "t";
  for (Eigen::Index k = 0; k < n; ++k) out << ",delta_" << (k + 1);
  for (Eigen::Index k = 0; k < g; ++k) out << ",omega_g" << (k + 1);
  out << ",energy,dist_target\n";

  const bool tracked = !traj.energy.empty();
  for (size_t i = 0; i < traj.times.size(); ++i) {
    print_value(out, traj.times[i]);
    const SystemState& s = traj.states[i];
    for (Eigen::Index k = 0; k < n; ++k) {
      out << ',';
      print_value(out, s.angles[k]);
    }
    for (Eigen::Index k = 0; k < g; ++k) {
      out << ',';
      print_value(out, s.gen_frequencies[k]);
    }
    out << ',';
    print_value(out, tracked ? traj.energy[i] : std::nan(""));
    out << ',';
    print_value(out, tracked ? traj.dist_target[i] : std::nan(""));
    out << '\n';
  }
}

Json events_json(const Trajectory& traj) {
  Json arr = Json::array();
  for (const Event& event : traj.events) {
    Json e;
    e["time"] = round12(event.time);
    e["kind"] = event.kind == EventKind::Separation ? "separation" : "switch";
    e["detail"] = event.detail;
    arr.push_back(e);
  }
  return arr;
}

Json region_json(const InverseStabilityRegion& region) {
  Json j;
  j["lambda"] = round12(region.lambda);
  j["g"] = round12(region.gain);
  j["R"] = round12(region.radius);
  j["threshold"] = round12(region.threshold);
  j["kinetic_offset"] = round12(region.kinetic_offset);
  j["empty"] = region.empty;
  j["caveats"] = region.caveats;
  return j;
}

Json certificate_json(const CertificateReport& report) {
  Json j;
  j["method"] = report.method;
  j["passes"] = report.passes;
  j["energy_at_start"] = round12(report.energy_at_start);
  j["level"] = round12(report.level);
  j["margin"] = round12(report.margin);
  j["caveats"] = report.caveats;
  return j;
}

Json plan_json(const ControlPlan& plan) {
  Json j;
  j["stages"] = Json::array();
  for (const PlanStage& stage : plan.stages) {
    Json s;
    s["ep"] = vec_json(stage.ep.angles);
    s["injections"] = vec_json(stage.injections.values());
    s["t"] = round12(stage.t);
    s["verification"] = stage.verification;
    j["stages"].push_back(s);
  }
  j["desired"] = vec_json(plan.desired.angles);
  j["lambda"] = round12(plan.lambda);
  j["switch_tolerance"] = round12(plan.switch_tolerance);
  return j;
}

Json equilibrium_json(const EquilibriumPoint& ep) {
  Json j;
  j["angles"] = vec_json(ep.angles);
  j["residual"] = round12(ep.residual);
  return j;
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace invstab
