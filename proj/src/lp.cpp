#include "invstab/lp.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "invstab/errors.hpp"

namespace invstab {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kFeasTol = 1e-8;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Standard-form problem: min c'y, A y = b, y >= 0, b >= 0.
struct StandardForm {
  Mat a;
  Vec b;
  Vec c;
  // Recovery of the caller's variables: x_i = shift_i
  //   + sum over (column, sign) terms of sign * y_column.
  struct Term {
    int column;
    double sign;
  };
  std::vector<std::vector<Term>> terms;
  Vec shift;
};

// Tableau simplex with Bland's rule on the given standard form. Phase one
// minimizes the sum of artificials, phase two the real objective.
class Simplex {
 public:
  Simplex(const StandardForm& sf) : m_(sf.a.rows()), n_(sf.a.cols()) {
    // Columns: structural variables, then one artificial per row.
    tableau_ = Mat::Zero(m_ + 1, n_ + m_ + 1);
    tableau_.topLeftCorner(m_, n_) = sf.a;
    tableau_.block(0, n_, m_, m_) = Mat::Identity(m_, m_);
    tableau_.col(n_ + m_).head(m_) = sf.b;
    basis_.resize(m_);
    for (int r = 0; r < m_; ++r) basis_[r] = n_ + r;
  }

  LpStatus run(const Vec& cost, Vec* y_out, double* objective) {
    // Phase one.
    set_cost_row_for_artificials();
    pivot_until_optimal(/*allow_artificial_entering=*/false);
    if (tableau_(m_, n_ + m_) < -kFeasTol) return LpStatus::Infeasible;
    drive_artificials_out();

    // Phase two.
    set_cost_row(cost);
    if (!pivot_until_optimal(false)) return LpStatus::Unbounded;

    Vec y = Vec::Zero(n_);
    for (int r = 0; r < m_; ++r) {
      if (basis_[r] < n_) y[basis_[r]] = tableau_(r, n_ + m_);
    }
    *y_out = y;
    *objective = cost.dot(y);
    return LpStatus::Optimal;
  }

 private:
  void set_cost_row_for_artificials() {
    tableau_.row(m_).setZero();
    for (int c = n_; c < n_ + m_; ++c) tableau_(m_, c) = 1.0;
    for (int r = 0; r < m_; ++r) price_out(r);
  }

  void set_cost_row(const Vec& cost) {
    tableau_.row(m_).setZero();
    tableau_.row(m_).head(n_) = cost.transpose();
    for (int r = 0; r < m_; ++r) price_out(r);
  }

  void price_out(int row) {
    const double coeff = tableau_(m_, basis_[row]);
    if (coeff != 0.0) tableau_.row(m_) -= coeff * tableau_.row(row);
  }

  // Bland's rule: smallest eligible column, smallest-index tie break on the
  // ratio test. Returns false on unboundedness.
  bool pivot_until_optimal(bool allow_artificial_entering) {
    const int cols = allow_artificial_entering ? n_ + m_ : n_;
    for (;;) {
      int entering = -1;
      for (int c = 0; c < cols; ++c) {
        if (is_basic(c)) continue;
        if (tableau_(m_, c) < -kPivotTol) {
          entering = c;
          break;
        }
      }
      if (entering < 0) return true;

      int leaving = -1;
      double best_ratio = kInf;
      for (int r = 0; r < m_; ++r) {
        const double a = tableau_(r, entering);
        if (a > kPivotTol) {
          const double ratio = tableau_(r, n_ + m_) / a;
          if (ratio < best_ratio - kPivotTol ||
              (ratio < best_ratio + kPivotTol && leaving >= 0 &&
               basis_[r] < basis_[leaving])) {
            best_ratio = ratio;
            leaving = r;
          }
        }
      }
      if (leaving < 0) return false;
      pivot(leaving, entering);
    }
  }

  // After phase one, swap any artificial still basic (at level zero) for a
  // structural column, or recognize the row as redundant and leave it; the
  // artificial then stays at zero because it may never re-enter.
  void drive_artificials_out() {
    for (int r = 0; r < m_; ++r) {
      if (basis_[r] < n_) continue;
      for (int c = 0; c < n_; ++c) {
        if (std::abs(tableau_(r, c)) > kPivotTol) {
          pivot(r, c);
          break;
        }
      }
    }
  }

  bool is_basic(int c) const {
    for (int r = 0; r < m_; ++r) {
      if (basis_[r] == c) return true;
    }
    return false;
  }

  void pivot(int row, int col) {
    tableau_.row(row) /= tableau_(row, col);
    for (int r = 0; r <= m_; ++r) {
      if (r == row) continue;
      const double factor = tableau_(r, col);
      if (factor != 0.0) tableau_.row(r) -= factor * tableau_.row(row);
    }
    basis_[row] = col;
  }

  int m_;
  int n_;
  Mat tableau_;
  std::vector<int> basis_;
};

}  // namespace

LpResult solve_lp(const LinearProgram& lp) {
  const int nx = static_cast<int>(lp.objective.size());
  const int rows = static_cast<int>(lp.rhs.size());
  if (lp.constraints.rows() != rows ||
      (rows > 0 && lp.constraints.cols() != nx) ||
      static_cast<int>(lp.relations.size()) != rows ||
      lp.lower.size() != nx || lp.upper.size() != nx) {
    throw ValidationError("linear program dimensions are inconsistent");
  }

  // Rewrite each variable with nonnegative parts:
  //   finite lower:      x = lo + u,           extra row u <= hi - lo if hi finite
  //   only finite upper: x = hi - u
  //   free:              x = u+ - u-
  StandardForm sf;
  sf.shift = Vec::Zero(nx);
  sf.terms.resize(nx);
  int cols = 0;
  struct UpperRow {
    int column;
    double bound;
  };
  std::vector<UpperRow> upper_rows;
  for (int i = 0; i < nx; ++i) {
    const double lo = lp.lower[i];
    const double hi = lp.upper[i];
    if (lo > hi) return LpResult{LpStatus::Infeasible, Vec::Zero(nx), 0.0};
    if (std::isfinite(lo)) {
      sf.shift[i] = lo;
      sf.terms[i].push_back({cols, 1.0});
      if (std::isfinite(hi)) upper_rows.push_back({cols, hi - lo});
      ++cols;
    } else if (std::isfinite(hi)) {
      sf.shift[i] = hi;
      sf.terms[i].push_back({cols, -1.0});
      ++cols;
    } else {
      sf.terms[i].push_back({cols, 1.0});
      sf.terms[i].push_back({cols + 1, -1.0});
      cols += 2;
    }
  }

  const int total_rows = rows + static_cast<int>(upper_rows.size());
  // Slack columns: one per inequality row.
  int slack_count = static_cast<int>(upper_rows.size());
  for (const Relation rel : lp.relations) {
    if (rel != Relation::Equal) ++slack_count;
  }

  sf.a = Mat::Zero(total_rows, cols + slack_count);
  sf.b = Vec::Zero(total_rows);
  sf.c = Vec::Zero(cols + slack_count);

  int slack_at = cols;
  for (int r = 0; r < rows; ++r) {
    double rhs = lp.rhs[r];
    for (int i = 0; i < nx; ++i) {
      const double coeff = lp.constraints(r, i);
      if (coeff == 0.0) continue;
      rhs -= coeff * sf.shift[i];
      for (const auto& term : sf.terms[i]) {
        sf.a(r, term.column) += coeff * term.sign;
      }
    }
    sf.b[r] = rhs;
    if (lp.relations[r] == Relation::LessEqual) {
      sf.a(r, slack_at++) = 1.0;
    } else if (lp.relations[r] == Relation::GreaterEqual) {
      sf.a(r, slack_at++) = -1.0;
    }
  }
  for (size_t u = 0; u < upper_rows.size(); ++u) {
    const int r = rows + static_cast<int>(u);
    sf.a(r, upper_rows[u].column) = 1.0;
    sf.a(r, slack_at++) = 1.0;
    sf.b[r] = upper_rows[u].bound;
  }
  for (int r = 0; r < total_rows; ++r) {
    if (sf.b[r] < 0.0) {
      sf.a.row(r) = -sf.a.row(r);
      sf.b[r] = -sf.b[r];
    }
  }

  for (int i = 0; i < nx; ++i) {
    for (const auto& term : sf.terms[i]) {
      sf.c[term.column] += lp.objective[i] * term.sign;
    }
  }

  Simplex simplex(sf);
  Vec y;
  double objective = 0.0;
  const LpStatus status = simplex.run(sf.c, &y, &objective);

  LpResult result;
  result.status = status;
  result.x = Vec::Zero(nx);
  if (status == LpStatus::Optimal) {
    for (int i = 0; i < nx; ++i) {
      result.x[i] = sf.shift[i];
      for (const auto& term : sf.terms[i]) {
        result.x[i] += term.sign * y[term.column];
      }
    }
    result.objective = lp.objective.dot(result.x);
  }
  return result;
}

}  // namespace invstab
