#include "invstab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "invstab/errors.hpp"

namespace invstab {

namespace {

std::string bus_label(int index) {
  return "bus " + std::to_string(index + 1);
}

std::string line_label(const Line& line) {
  return "line " + std::to_string(line.from + 1) + "-" +
         std::to_string(line.to + 1);
}

std::vector<bool> reachable_from_zero(int n, const std::vector<Line>& lines) {
  std::vector<std::vector<int>> adj(n);
  for (const Line& line : lines) {
    adj[line.from].push_back(line.to);
    adj[line.to].push_back(line.from);
  }
  std::vector<bool> seen(n, false);
  std::vector<int> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    int k = stack.back();
    stack.pop_back();
    for (int j : adj[k]) {
      if (!seen[j]) {
        seen[j] = true;
        stack.push_back(j);
      }
    }
  }
  return seen;
}

}  // namespace

double line_weight(const Line& line, CouplingWeight choice) {
  switch (choice) {
    case CouplingWeight::Lower:
      return line.coupling_lo;
    case CouplingWeight::Upper:
      return line.coupling_hi;
    default:
      return line.coupling;
  }
}

GridNetwork::GridNetwork(std::vector<Bus> buses, std::vector<Line> lines,
                         bool require_connected)
    : buses_(std::move(buses)), lines_(std::move(lines)) {
  const int n = static_cast<int>(buses_.size());
  if (n == 0) throw ValidationError("grid has no buses");

  // Ids must be exactly 1..N; buses are stored so that index == id - 1.
  std::sort(buses_.begin(), buses_.end(),
            [](const Bus& a, const Bus& b) { return a.id < b.id; });
  for (int k = 0; k < n; ++k) {
    if (buses_[k].id != k + 1) {
      throw ValidationError("bus ids must be exactly 1.." +
                            std::to_string(n) + ", got id " +
                            std::to_string(buses_[k].id));
    }
  }

  for (int k = 0; k < n; ++k) {
    const Bus& bus = buses_[k];
    if (!(bus.voltage > 0.0)) {
      throw ValidationError(bus_label(k) + ": voltage must be positive");
    }
    if (!(bus.damping > 0.0)) {
      throw ValidationError(bus_label(k) + ": damping must be positive");
    }
    if (bus.kind == BusKind::Generator && !(bus.inertia > 0.0)) {
      throw ValidationError(bus_label(k) + ": generator inertia must be positive");
    }
  }

  std::set<std::pair<int, int>> seen;
  for (Line& line : lines_) {
    if (line.from < 0 || line.from >= n || line.to < 0 || line.to >= n) {
      throw ValidationError("line endpoint out of range");
    }
    if (line.from == line.to) {
      throw ValidationError("self-loop at " + bus_label(line.from));
    }
    if (line.from > line.to) std::swap(line.from, line.to);
    if (!seen.insert({line.from, line.to}).second) {
      throw ValidationError("duplicate " + line_label(line));
    }
    if (!(line.susceptance > 0.0)) {
      throw ValidationError(line_label(line) + ": susceptance must be positive");
    }
    line.coupling =
        buses_[line.from].voltage * buses_[line.to].voltage * line.susceptance;
    if (std::isnan(line.coupling_lo)) line.coupling_lo = line.coupling;
    if (std::isnan(line.coupling_hi)) line.coupling_hi = line.coupling;
    if (!(line.coupling_lo > 0.0) || line.coupling_lo > line.coupling ||
        line.coupling > line.coupling_hi) {
      throw ValidationError(line_label(line) +
                            ": coupling interval must satisfy 0 < lo <= "
                            "nominal <= hi");
    }
  }

  for (int k = 0; k < n; ++k) {
    (buses_[k].kind == BusKind::Generator ? generators_ : loads_).push_back(k);
  }
  if (generators_.empty()) {
    throw ValidationError("grid needs at least one generator");
  }

  const auto seen_from_zero = reachable_from_zero(n, lines_);
  connected_ = std::all_of(seen_from_zero.begin(), seen_from_zero.end(),
                           [](bool b) { return b; });
  if (require_connected && !connected_) {
    throw ValidationError("grid graph is not connected");
  }
}

std::optional<int> GridNetwork::find_line(int k, int j) const {
  if (k > j) std::swap(k, j);
  for (size_t e = 0; e < lines_.size(); ++e) {
    if (lines_[e].from == k && lines_[e].to == j) return static_cast<int>(e);
  }
  return std::nullopt;
}

InjectionVector::InjectionVector(Vec values) : values_(std::move(values)) {
  const double sum = values_.sum();
  if (std::abs(sum) > kBalanceTol) {
    std::ostringstream msg;
    msg << "injections are unbalanced: sum = " << sum;
    throw ValidationError(msg.str());
  }
}

InjectionVector InjectionVector::rebalanced(Vec values) {
  values.array() -= values.mean();
  return InjectionVector(std::move(values));
}

namespace {

using nlohmann::ordered_json;

void reject_unknown_keys(const ordered_json& obj,
                         const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw ParseError(where + ": unknown key \"" + item.key() + "\"");
    }
  }
}

double number_at(const ordered_json& obj, const std::string& key,
                 const std::string& where) {
  if (!obj.contains(key)) throw ParseError(where + ": missing \"" + key + "\"");
  if (!obj[key].is_number()) {
    throw ParseError(where + ": \"" + key + "\" must be a number");
  }
  return obj[key].get<double>();
}

int integer_at(const ordered_json& obj, const std::string& key,
               const std::string& where) {
  if (!obj.contains(key)) throw ParseError(where + ": missing \"" + key + "\"");
  if (!obj[key].is_number_integer()) {
    throw ParseError(where + ": \"" + key + "\" must be an integer");
  }
  return obj[key].get<int>();
}

}  // namespace

GridNetwork load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open grid file " + path.string());

  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("grid file " + path.string() + ": " + e.what());
  }

  if (!doc.is_object()) throw ParseError("grid file must be a JSON object");
  reject_unknown_keys(doc, {"buses", "lines"}, "grid file");
  if (!doc.contains("buses") || !doc["buses"].is_array()) {
    throw ParseError("grid file: \"buses\" array is required");
  }
  if (!doc.contains("lines") || !doc["lines"].is_array()) {
    throw ParseError("grid file: \"lines\" array is required");
  }

  std::vector<Bus> buses;
  for (const auto& entry : doc["buses"]) {
    if (!entry.is_object()) throw ParseError("bus entries must be objects");
    const std::string where =
        "bus " + (entry.contains("id") ? entry["id"].dump() : "<no id>");
    reject_unknown_keys(entry, {"id", "kind", "voltage", "inertia", "damping"},
                        where);
    Bus bus;
    bus.id = integer_at(entry, "id", where);
    if (!entry.contains("kind") || !entry["kind"].is_string()) {
      throw ParseError(where + ": \"kind\" must be a string");
    }
    const std::string kind = entry["kind"].get<std::string>();
    if (kind == "generator") {
      bus.kind = BusKind::Generator;
    } else if (kind == "load") {
      bus.kind = BusKind::Load;
    } else {
      throw ParseError(where + ": kind must be \"generator\" or \"load\"");
    }
    bus.voltage = number_at(entry, "voltage", where);
    bus.damping = number_at(entry, "damping", where);
    if (bus.kind == BusKind::Generator) {
      bus.inertia = number_at(entry, "inertia", where);
    }
    // Inertia on a load bus is legal in the format and ignored by the model.
    buses.push_back(bus);
  }

  std::vector<Line> lines;
  for (const auto& entry : doc["lines"]) {
    if (!entry.is_object()) throw ParseError("line entries must be objects");
    const std::string where = "line " +
                              (entry.contains("from") ? entry["from"].dump() : "?") +
                              "-" +
                              (entry.contains("to") ? entry["to"].dump() : "?");
    reject_unknown_keys(
        entry, {"from", "to", "susceptance", "coupling_lo", "coupling_hi"},
        where);
    Line line;
    line.from = integer_at(entry, "from", where) - 1;
    line.to = integer_at(entry, "to", where) - 1;
    line.susceptance = number_at(entry, "susceptance", where);
    line.coupling_lo = entry.contains("coupling_lo")
                           ? number_at(entry, "coupling_lo", where)
                           : std::nan("");
    line.coupling_hi = entry.contains("coupling_hi")
                           ? number_at(entry, "coupling_hi", where)
                           : std::nan("");
    lines.push_back(line);
  }

  return GridNetwork(std::move(buses), std::move(lines));
}

Mat weighted_laplacian(const GridNetwork& grid, CouplingWeight choice) {
  const int n = grid.size();
  Mat laplacian = Mat::Zero(n, n);
  for (const Line& line : grid.lines()) {
    const double w = line_weight(line, choice);
    laplacian(line.from, line.to) -= w;
    laplacian(line.to, line.from) -= w;
    laplacian(line.from, line.from) += w;
    laplacian(line.to, line.to) += w;
  }
  return laplacian;
}

Mat laplacian_pseudoinverse(const GridNetwork& grid, CouplingWeight choice) {
  if (!grid.connected()) {
    throw SingularityError(
        "Laplacian pseudoinverse requires a connected grid");
  }
  const int n = grid.size();
  // On a connected graph L + J/n is positive definite and its inverse
  // differs from the pseudoinverse exactly by J/n.
  const Mat shifted =
      weighted_laplacian(grid, choice) + Mat::Constant(n, n, 1.0 / n);
  Eigen::LLT<Mat> llt(shifted);
  if (llt.info() != Eigen::Success) {
    throw SingularityError("weighted Laplacian is numerically singular");
  }
  return llt.solve(Mat::Identity(n, n)) - Mat::Constant(n, n, 1.0 / n);
}

Vec edge_gaps(const GridNetwork& grid, const Vec& x) {
  if (x.size() != grid.size()) {
    throw ValidationError("vector length does not match bus count");
  }
  Vec gaps(grid.line_count());
  for (int e = 0; e < grid.line_count(); ++e) {
    const Line& line = grid.line(e);
    gaps[e] = x[line.from] - x[line.to];
  }
  return gaps;
}

double edge_infinity_norm(const GridNetwork& grid, const Vec& x) {
  if (grid.line_count() == 0) return 0.0;
  return edge_gaps(grid, x).cwiseAbs().maxCoeff();
}

}  // namespace invstab
