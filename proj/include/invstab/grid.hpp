#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace invstab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class BusKind { Generator, Load };

/// Static per-bus data. Bus ids are 1-based in grid files; everywhere else
/// buses are addressed by their 0-based index (id - 1).
struct Bus {
  int id = 0;
  BusKind kind = BusKind::Load;
  double voltage = 1.0;  // per-unit magnitude
  double inertia = 0.0;  // generators only
  double damping = 0.0;  // must be positive for every bus
};

/// Transmission line, stored with from < to (0-based indices).
///
/// coupling is the nominal sinusoidal coupling V_from * V_to * susceptance.
/// [coupling_lo, coupling_hi] is the admissible coupling interval; it
/// defaults to the degenerate interval at the nominal value.
struct Line {
  int from = 0;
  int to = 0;
  double susceptance = 0.0;
  double coupling = 0.0;
  double coupling_lo = 0.0;
  double coupling_hi = 0.0;
};

enum class CouplingWeight { Nominal, Lower, Upper };

double line_weight(const Line& line, CouplingWeight choice);

class GridNetwork {
 public:
  /// Validates and stores the network. Line endpoints are 0-based and may be
  /// given in either order. coupling_lo/coupling_hi entries that are NaN
  /// default to the nominal coupling. With require_connected = false a
  /// disconnected graph is accepted; that variant exists for fault-on
  /// topologies produced by apply_fault.
  GridNetwork(std::vector<Bus> buses, std::vector<Line> lines,
              bool require_connected = true);

  int size() const { return static_cast<int>(buses_.size()); }
  const std::vector<Bus>& buses() const { return buses_; }
  const Bus& bus(int k) const { return buses_[static_cast<size_t>(k)]; }
  const std::vector<Line>& lines() const { return lines_; }
  const Line& line(int e) const { return lines_[static_cast<size_t>(e)]; }
  int line_count() const { return static_cast<int>(lines_.size()); }

  /// 0-based bus indices, ascending.
  const std::vector<int>& generators() const { return generators_; }
  const std::vector<int>& loads() const { return loads_; }
  int generator_count() const { return static_cast<int>(generators_.size()); }

  bool connected() const { return connected_; }

  /// Index of the line joining buses k and j (either order), if present.
  std::optional<int> find_line(int k, int j) const;

 private:
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<int> generators_;
  std::vector<int> loads_;
  bool connected_ = false;
};

/// Active-power injections, one entry per bus. The lossless model only
/// admits balanced vectors, so construction enforces |sum| <= kBalanceTol.
class InjectionVector {
 public:
  static constexpr double kBalanceTol = 1e-9;

  explicit InjectionVector(Vec values);

  /// Removes the uniform component so the result balances exactly. The
  /// shift is invisible to every edge quantity (Laplacian images, flows,
  /// equilibria); it exists to absorb rounding in externally produced data.
  static InjectionVector rebalanced(Vec values);

  const Vec& values() const { return values_; }
  double operator[](int k) const { return values_[k]; }
  int size() const { return static_cast<int>(values_.size()); }

 private:
  Vec values_;
};

/// Parses and validates a grid file. See README for the schema. Unknown
/// keys are rejected so that typos fail loudly.
GridNetwork load_grid(const std::filesystem::path& path);

/// Coupling-weighted graph Laplacian (dense, size N x N).
Mat weighted_laplacian(const GridNetwork& grid,
                       CouplingWeight choice = CouplingWeight::Nominal);

/// Moore-Penrose pseudoinverse of the weighted Laplacian, obtained by
/// inverting on the mean-zero subspace. Throws SingularityError when the
/// graph is disconnected.
Mat laplacian_pseudoinverse(const GridNetwork& grid,
                            CouplingWeight choice = CouplingWeight::Nominal);

/// Per-line differences x[from] - x[to].
Vec edge_gaps(const GridNetwork& grid, const Vec& x);

/// max over lines of |x_k - x_j|. Invariant under uniform shifts of x.
double edge_infinity_norm(const GridNetwork& grid, const Vec& x);

}  // namespace invstab
