#include <cmath>

#include "doctest.h"
#include "ergodic/catalog.hpp"
#include "ergodic/diagnostics.hpp"
#include "ergodic/errors.hpp"

using namespace ergodic;

namespace {

const double kSqrt2 = std::sqrt(2.0);
const InnovationDist kThree{InnovationKind::three_point, 1};

DiffusionModel frozen() {
  DiffusionModel m;
  m.drift = [](ConstVec, MutVec out) { out[0] = 0.0; };
  m.diffusion = [](ConstVec, MutVec out) { out[0] = 0.0; };
  m.drift_jet = [](ConstVec, Directions, MutVec out) { out[0] = 0.0; };
  m.drift_jet_order = 6;
  m.diffusion_jet = [](ConstVec, Directions, MutVec out) { out[0] = 0.0; };
  m.diffusion_jet_order = 6;
  return m;
}

}  // namespace

TEST_CASE("default grids") {
  const auto g1 = default_grid(1);
  CHECK(g1.size() == 21);
  CHECK(g1.front()[0] == -5.0);
  CHECK(g1.back()[0] == 5.0);
  CHECK(default_grid(2).size() == 441);
  const auto g3 = default_grid(3);
  CHECK(g3.size() == 200);
  for (const auto& x : g3)
    for (double e : x) CHECK(std::abs(e) <= 5.0);
  CHECK(default_grid(3) == g3);
}

TEST_CASE("recursive control on OU with V = 1 + x^2") {
  const auto ou = ou1d(1.0, kSqrt2);
  const auto grid = default_grid(1);
  const RecursiveControlOptions opts{kThree, Enumerate{}, std::nullopt};
  // A V = 4 - 2 V exactly, so the discrete margins are O(gamma).
  for (auto scheme : {Scheme::euler, Scheme::talay2}) {
    const auto report = recursive_control_probe(scheme, ou, quadratic_lyapunov(1, 2.0, 4.0), 1e-3, grid, opts);
    for (double m : report.margins) CHECK(m >= -0.1);
    for (double m : report.mean_reverting_margins) CHECK(std::abs(m) < 1e-12);
    CHECK(report.lambda_p_grid_max == 2.0);
  }
  const auto pass = recursive_control_probe(Scheme::talay2, ou, quadratic_lyapunov(1, 2.0, 4.0), 1e-3, grid, opts);
  CHECK(pass.verdict == Verdict::pass);
  const auto fail = recursive_control_probe(Scheme::talay2, ou, quadratic_lyapunov(1, 10.0, 4.0), 1e-3, grid, opts);
  CHECK(fail.verdict == Verdict::fail);
  CHECK(std::abs(fail.worst_point[0]) >= 2.0);
  // 4 - 10 V < 0 at |x| = 2 while A V = 4 - 2 V: the bound is violated there.
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::abs(grid[i][0]) == 2.0) CHECK(fail.margins[i] < -probe_tolerance(fail.rhs[i]));
}

TEST_CASE("frozen dynamics: the margin is the right-hand side") {
  const auto grid = default_grid(1);
  const auto report = recursive_control_probe(Scheme::euler, frozen(), quadratic_lyapunov(1, 2.0, 4.0), 0.1, grid,
                                              {kThree, Enumerate{}, std::nullopt});
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(report.margins[i] == doctest::Approx(report.rhs[i]).epsilon(1e-12));
}

TEST_CASE("Monte Carlo probes become inconclusive when noisy") {
  const auto ou = ou1d(1.0, kSqrt2);
  const std::vector<Vector> grid{{0.5}, {1.0}, {3.0}};
  const auto noisy = recursive_control_probe(Scheme::euler, ou, quadratic_lyapunov(1, 2.0, 4.0), 1e-3, grid,
                                             {{InnovationKind::gaussian, 1}, MonteCarlo{100, 1}, std::nullopt});
  CHECK(noisy.verdict == Verdict::inconclusive);
  for (double se : noisy.std_errors) CHECK(se > 0.0);
}

TEST_CASE("step sweep and alpha tilde") {
  const auto ou = ou1d(1.0, kSqrt2);
  const auto grid = default_grid(1);
  const std::vector<double> gammas{0.5, 1e-3, 1e-2};
  RecursiveControlOptions opts{kThree, Enumerate{}, 1.5};
  const auto sweep = recursive_control_sweep(Scheme::talay2, ou, quadratic_lyapunov(1, 2.0, 4.0), gammas, grid, opts);
  CHECK(sweep.gammas.front() == 1e-3);
  REQUIRE(sweep.holds_up_to.has_value());
  CHECK(*sweep.holds_up_to >= 1e-3);
}

TEST_CASE("probe reports are deterministic and export to JSON") {
  const auto ou = ou1d(1.0, kSqrt2);
  const auto grid = default_grid(1);
  const RecursiveControlOptions opts{kThree, Enumerate{}, std::nullopt};
  const auto a = to_json(recursive_control_probe(Scheme::talay2, ou, quadratic_lyapunov(1, 2.0, 4.0), 1e-2, grid, opts));
  const auto b = to_json(recursive_control_probe(Scheme::talay2, ou, quadratic_lyapunov(1, 2.0, 4.0), 1e-2, grid, opts));
  CHECK(a.dump() == b.dump());
  for (const char* key : {"grid", "margins", "verdict", "worst_point"}) CHECK(a.contains(key));
  CHECK(a["grid"].size() == 21);
}

TEST_CASE("moment matching report") {
  const auto three = moment_match_report({InnovationKind::three_point, 2}, 5);
  for (const auto& e : three.entries) CHECK(e.deviation == 0.0);
  CHECK(three.matched_order == 5);
  // Number of exponent vectors of degree 1..5 in two variables: 2 + 3 + 4 + 5 + 6.
  CHECK(three.entries.size() == 20);

  const auto rad3 = moment_match_report({InnovationKind::rademacher, 1}, 3);
  for (const auto& e : rad3.entries) CHECK(e.deviation == 0.0);
  const auto rad4 = moment_match_report({InnovationKind::rademacher, 2}, 4);
  CHECK(rad4.matched_order == 3);
  int pure = 0;
  for (const auto& e : rad4.entries) {
    const bool is_pure = e.order == 4 && (e.index[0] == 4 || e.index[1] == 4);
    if (is_pure) {
      CHECK(e.moment == 1.0);
      CHECK(e.gaussian == 3.0);
      CHECK(std::abs(e.deviation) == 2.0);
      ++pure;
    } else {
      CHECK(e.deviation == 0.0);
    }
  }
  CHECK(pure == 2);

  const auto gauss = moment_match_report({InnovationKind::gaussian, 3}, 6);
  for (const auto& e : gauss.entries) CHECK(e.deviation == 0.0);
  const auto six = moment_match_report({InnovationKind::three_point, 1}, 6);
  CHECK(six.matched_order == 5);
  CHECK_THROWS(moment_match_report(kThree, 0));
}

TEST_CASE("weak order probe") {
  const auto ou = ou1d(1.0, kSqrt2);
  const auto f = parse_observable("x^4", 1);
  const std::vector<double> x{1.0};
  const std::vector<double> gammas{std::pow(2.0, -6), std::pow(2.0, -7)};
  const auto euler = weak_order_probe(Scheme::euler, ou, f, x, gammas, kThree);
  REQUIRE(euler.ratios.size() == 1);
  CHECK(euler.ratios[0] >= 3.2);
  CHECK(euler.ratios[0] <= 4.8);
  const auto talay = weak_order_probe(Scheme::talay2, ou, f, x, gammas, kThree);
  CHECK(talay.ratios[0] >= 6.0);
  CHECK(talay.ratios[0] <= 10.0);
  CHECK(talay.points[0].target == doctest::Approx(1 + gammas[0] * 8 - 16 * gammas[0] * gammas[0]));

  // Closed form of the Euler one-step expectation for x^4 at x = 1, three-point U:
  // Y = a + c U with a = 1 - g, c = sqrt(2 g); E Y^4 = a^4 + 6 a^2 c^2 + 3 c^4.
  for (const auto& p : euler.points) {
    const double a = 1 - p.gamma, c2 = 2 * p.gamma;
    CHECK(p.expectation == doctest::Approx(a * a * a * a + 6 * a * a * c2 + 3 * c2 * c2).epsilon(1e-14));
  }

  const auto lin = weak_order_probe(Scheme::euler, ou, parse_observable("x", 1), x, gammas, kThree);
  for (const auto& p : lin.points) CHECK(std::abs(p.error) <= 1e-15);

  Observable zero;
  zero.value = [](ConstVec) { return 0.0; };
  zero.derivative = [](ConstVec, Directions) { return 0.0; };
  zero.max_order = 6;
  for (auto scheme : {Scheme::euler, Scheme::talay2}) {
    const auto z = weak_order_probe(scheme, ou, zero, x, gammas, kThree);
    for (const auto& p : z.points) CHECK(p.error == 0.0);
  }
  CHECK_THROWS_AS(weak_order_probe(Scheme::euler, ou, f, x, gammas, {InnovationKind::gaussian, 1}), UnsupportedError);
  const auto j = to_json(euler);
  CHECK(j["points"].size() == 2);
}
