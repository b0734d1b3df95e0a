#include <cmath>
#include <random>

#include "doctest.h"

#include "invstab/errors.hpp"
#include "invstab/grid.hpp"

#include "test_util.hpp"

using namespace invstab;

namespace {

Bus generator(int id, double voltage, double inertia, double damping) {
  Bus bus;
  bus.id = id;
  bus.kind = BusKind::Generator;
  bus.voltage = voltage;
  bus.inertia = inertia;
  bus.damping = damping;
  return bus;
}

Bus load(int id, double voltage, double damping) {
  Bus bus;
  bus.id = id;
  bus.kind = BusKind::Load;
  bus.voltage = voltage;
  bus.damping = damping;
  return bus;
}

Line link(int from, int to, double susceptance) {
  Line line;
  line.from = from;
  line.to = to;
  line.susceptance = susceptance;
  line.coupling_lo = std::nan("");
  line.coupling_hi = std::nan("");
  return line;
}

GridNetwork two_bus(double susceptance = 1.0) {
  return GridNetwork({generator(1, 1.0, 0.1, 0.05), load(2, 1.0, 0.05)},
                     {link(0, 1, susceptance)});
}

}  // namespace

TEST_CASE("network validation rejects malformed inputs") {
  CHECK_THROWS_AS(GridNetwork({}, {}), ValidationError);
  // ids must be 1..N
  CHECK_THROWS_AS(GridNetwork({generator(1, 1, .1, .1), load(3, 1, .1)},
                              {link(0, 1, 1)}),
                  ValidationError);
  // no generator
  CHECK_THROWS_AS(GridNetwork({load(1, 1, .1), load(2, 1, .1)}, {link(0, 1, 1)}),
                  ValidationError);
  // nonpositive parameters
  CHECK_THROWS_AS(GridNetwork({generator(1, -1, .1, .1), load(2, 1, .1)},
                              {link(0, 1, 1)}),
                  ValidationError);
  CHECK_THROWS_AS(GridNetwork({generator(1, 1, 0, .1), load(2, 1, .1)},
                              {link(0, 1, 1)}),
                  ValidationError);
  CHECK_THROWS_AS(GridNetwork({generator(1, 1, .1, 0), load(2, 1, .1)},
                              {link(0, 1, 1)}),
                  ValidationError);
  // self loop, duplicate line, dangling endpoint
  CHECK_THROWS_AS(GridNetwork({generator(1, 1, .1, .1), load(2, 1, .1)},
                              {link(0, 0, 1)}),
                  ValidationError);
  CHECK_THROWS_AS(GridNetwork({generator(1, 1, .1, .1), load(2, 1, .1)},
                              {link(0, 1, 1), link(1, 0, 2)}),
                  ValidationError);
  CHECK_THROWS_AS(GridNetwork({generator(1, 1, .1, .1), load(2, 1, .1)},
                              {link(0, 2, 1)}),
                  ValidationError);
  // disconnected graphs need the explicit opt-out
  std::vector<Bus> three{generator(1, 1, .1, .1), load(2, 1, .1), load(3, 1, .1)};
  CHECK_THROWS_AS(GridNetwork(three, {link(0, 1, 1)}), ValidationError);
  const GridNetwork faulted(three, {link(0, 1, 1)}, false);
  CHECK_FALSE(faulted.connected());
}

TEST_CASE("couplings come from voltages and susceptance, intervals bracket them") {
  std::vector<Bus> buses{generator(1, 1.05, 0.1, 0.05), load(2, 0.98, 0.05)};
  Line line = link(1, 0, 10.0);  // endpoints normalize to from < to
  const GridNetwork grid(buses, {line});
  REQUIRE(grid.line_count() == 1);
  CHECK(grid.line(0).from == 0);
  CHECK(grid.line(0).to == 1);
  CHECK(grid.line(0).coupling == doctest::Approx(1.05 * 0.98 * 10.0).epsilon(1e-15));
  // NaN bounds collapse to the nominal value
  CHECK(grid.line(0).coupling_lo == grid.line(0).coupling);
  CHECK(grid.line(0).coupling_hi == grid.line(0).coupling);

  line.coupling_lo = 9.0;
  line.coupling_hi = 11.0;
  const GridNetwork interval(buses, {line});
  CHECK(line_weight(interval.line(0), CouplingWeight::Lower) == 9.0);
  CHECK(line_weight(interval.line(0), CouplingWeight::Upper) == 11.0);
  CHECK(line_weight(interval.line(0), CouplingWeight::Nominal) ==
        interval.line(0).coupling);

  line.coupling_lo = 11.0;  // interval must contain the nominal value
  line.coupling_hi = 12.0;
  CHECK_THROWS_AS(GridNetwork(buses, {line}), ValidationError);
}

TEST_CASE("generator and load index sets partition the buses") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const GridNetwork grid = testutil::random_connected_grid(rng);
    CHECK(static_cast<int>(grid.generators().size() + grid.loads().size()) ==
          grid.size());
    for (int k : grid.generators()) CHECK(grid.bus(k).kind == BusKind::Generator);
    for (int k : grid.loads()) CHECK(grid.bus(k).kind == BusKind::Load);
  }
}

TEST_CASE("find_line accepts either endpoint order") {
  const GridNetwork grid = two_bus();
  REQUIRE(grid.find_line(0, 1).has_value());
  CHECK(grid.find_line(0, 1) == grid.find_line(1, 0));
  CHECK_FALSE(grid.find_line(0, 0).has_value());
}

TEST_CASE("injection vectors must balance") {
  Vec bad(2);
  bad << 1.0, -0.5;
  CHECK_THROWS_AS(InjectionVector{bad}, ValidationError);

  const InjectionVector fixed = InjectionVector::rebalanced(bad);
  CHECK(std::abs(fixed.values().sum()) <= 1e-15);
  CHECK(fixed[0] - fixed[1] == doctest::Approx(1.5).epsilon(1e-15));

  Vec good(2);
  good << 0.25, -0.25;
  CHECK(InjectionVector(good).size() == 2);
}

TEST_CASE("weighted laplacian annihilates constants and is symmetric") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const GridNetwork grid = testutil::random_connected_grid(
        rng, {.max_buses = 12, .interval_couplings = true});
    for (const auto choice : {CouplingWeight::Lower, CouplingWeight::Nominal,
                              CouplingWeight::Upper}) {
      const Mat L = weighted_laplacian(grid, choice);
      CHECK((L - L.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK((L * Vec::Ones(grid.size())).cwiseAbs().maxCoeff() <= 1e-12);
    }
    // the interval weights order the quadratic forms
    const Mat lo = weighted_laplacian(grid, CouplingWeight::Lower);
    const Mat hi = weighted_laplacian(grid, CouplingWeight::Upper);
    const Vec x = testutil::balanced_vector(rng, grid.size(), 1.0);
    CHECK(x.dot(lo * x) <= x.dot(hi * x) + 1e-12);
  }
}

TEST_CASE("two-bus pseudoinverse has the closed form") {
  const GridNetwork grid = two_bus(1.0);
  const Mat pinv = laplacian_pseudoinverse(grid);
  CHECK(pinv(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(pinv(0, 1) == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(pinv(1, 0) == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(pinv(1, 1) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("pseudoinverse satisfies the Moore-Penrose identities") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const GridNetwork grid = testutil::random_connected_grid(rng, {.max_buses = 10});
    const Mat L = weighted_laplacian(grid);
    const Mat P = laplacian_pseudoinverse(grid);
    CHECK((L * P * L - L).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((P * L * P - P).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((P * Vec::Ones(grid.size())).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("pseudoinverse refuses disconnected graphs") {
  const GridNetwork faulted(
      {generator(1, 1, .1, .1), load(2, 1, .1), load(3, 1, .1)},
      {link(0, 1, 1)}, false);
  CHECK_THROWS_AS(laplacian_pseudoinverse(faulted), SingularityError);
}

TEST_CASE("edge norms ignore uniform shifts") {
  std::mt19937_64 rng(14);
  const GridNetwork grid = testutil::random_connected_grid(rng);
  const Vec x = testutil::balanced_vector(rng, grid.size(), 1.0);
  const Vec shifted = x.array() + 17.0;
  CHECK(edge_infinity_norm(grid, x) ==
        doctest::Approx(edge_infinity_norm(grid, shifted)).epsilon(1e-12));
  const Vec gaps = edge_gaps(grid, x);
  REQUIRE(gaps.size() == grid.line_count());
  for (int e = 0; e < grid.line_count(); ++e) {
    CHECK(gaps[e] == doctest::Approx(x[grid.line(e).from] - x[grid.line(e).to])
                         .epsilon(1e-15));
  }
}
