#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"

#include "invstab/grid.hpp"
#include "invstab/qp.hpp"

#include "test_util.hpp"

using namespace invstab;

namespace {

constexpr double kPi = std::numbers::pi;

double objective(const Mat& Q, const Vec& lin, const Vec& x) {
  return 0.5 * x.dot(Q * x) + lin.dot(x);
}

bool feasible(const std::vector<GapConstraint>& gaps, const Vec& x,
              double tol = 1e-9) {
  for (const GapConstraint& c : gaps) {
    const double gap = x[c.from] - x[c.to];
    if (gap < c.lo - tol || gap > c.hi + tol) return false;
  }
  return true;
}

// Single-edge Laplacian; the objective is half the squared gap.
Mat edge_laplacian() {
  Mat Q(2, 2);
  Q << 1, -1, -1, 1;
  return Q;
}

}  // namespace

TEST_CASE("pinned gap with a gauge-fixed mean has a closed form") {
  // minimize (x1 - x2)^2 / 2 with the gap pinned at 0.3 and mean held at 0:
  // the only candidate is (0.15, -0.15).
  std::vector<GapConstraint> gaps{{0, 1, 0.3, 0.3}};
  Vec start(2);
  start << 0.15, -0.15;
  const QpResult res = solve_gap_qp(edge_laplacian(), Vec::Zero(2), gaps, start);
  REQUIRE(res.converged);
  CHECK(res.x[0] == doctest::Approx(0.15).epsilon(1e-10));
  CHECK(res.x[1] == doctest::Approx(-0.15).epsilon(1e-10));
  CHECK(objective(edge_laplacian(), Vec::Zero(2), res.x) ==
        doctest::Approx(0.045).epsilon(1e-10));
}

TEST_CASE("face of a path graph relaxes the free gap to zero") {
  // three buses in a path, unit weights; pin gap(1,2) = pi/2, box gap(2,3).
  Mat Q(3, 3);
  Q << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  std::vector<GapConstraint> gaps{{0, 1, kPi / 2, kPi / 2},
                                  {1, 2, -kPi / 2, kPi / 2}};
  Vec start(3);
  start << kPi / 4, -kPi / 4, -kPi / 4 + 0.3;
  start.array() -= start.mean();
  const QpResult res = solve_gap_qp(Q, Vec::Zero(3), gaps, start);
  REQUIRE(res.converged);
  CHECK(res.x[0] - res.x[1] == doctest::Approx(kPi / 2).epsilon(1e-9));
  CHECK(res.x[1] - res.x[2] == doctest::Approx(0.0).epsilon(1e-9));
  // 0.5 * (pi/2)^2
  CHECK(objective(Q, Vec::Zero(3), res.x) ==
        doctest::Approx(1.2337005501361697).epsilon(1e-10));
  CHECK(res.x.mean() == doctest::Approx(start.mean()).epsilon(1e-12));
}

TEST_CASE("solver start point must be feasible") {
  std::vector<GapConstraint> gaps{{0, 1, 0.3, 0.3}};
  Vec start = Vec::Zero(2);
  CHECK_THROWS(solve_gap_qp(edge_laplacian(), Vec::Zero(2), gaps, start));
}

TEST_CASE("active-set minimum beats sampled feasible points") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> bound(0.2, 1.2);
  for (int trial = 0; trial < 10; ++trial) {
    const GridNetwork grid = testutil::random_connected_grid(rng, {.max_buses = 7});
    const Mat Q = weighted_laplacian(grid);
    // gauge-invariant linear term: lin = -Q v pulls x toward v's gaps
    const Vec v = testutil::balanced_vector(rng, grid.size(), 1.5);
    const Vec lin = -(Q * v);

    std::vector<GapConstraint> gaps;
    for (const Line& line : grid.lines()) {
      const double b = bound(rng);
      gaps.push_back({line.from, line.to, -b, b});
    }
    const Vec start = Vec::Zero(grid.size());
    REQUIRE(feasible(gaps, start));
    const QpResult res = solve_gap_qp(Q, lin, gaps, start);
    REQUIRE(res.converged);
    REQUIRE(feasible(gaps, res.x));
    const double best = objective(Q, lin, res.x);

    for (int s = 0; s < 50; ++s) {
      const Vec raw = testutil::balanced_vector(rng, grid.size(), 1.0);
      const Vec y = project_onto_gaps(raw, gaps, start);
      REQUIRE(feasible(gaps, y));
      CHECK(best <= objective(Q, lin, y) + 1e-8);
    }
  }
}

TEST_CASE("projection is exact on feasible points and idempotent") {
  std::mt19937_64 rng(32);
  const GridNetwork grid = testutil::random_connected_grid(rng, {.max_buses = 6});
  std::vector<GapConstraint> gaps;
  for (const Line& line : grid.lines()) gaps.push_back({line.from, line.to, -0.4, 0.4});
  const Vec start = Vec::Zero(grid.size());

  for (int s = 0; s < 25; ++s) {
    const Vec raw = testutil::balanced_vector(rng, grid.size(), 1.0);
    const Vec proj = project_onto_gaps(raw, gaps, start);
    const Vec again = project_onto_gaps(proj, gaps, proj);
    CHECK((proj - again).cwiseAbs().maxCoeff() <= 1e-8);
    // minimality of the distance against sampled feasible competitors
    for (int q = 0; q < 10; ++q) {
      const Vec y =
          project_onto_gaps(testutil::balanced_vector(rng, grid.size(), 0.8),
                            gaps, start);
      CHECK((raw - proj).squaredNorm() <= (raw - y).squaredNorm() + 1e-8);
    }
  }
}
