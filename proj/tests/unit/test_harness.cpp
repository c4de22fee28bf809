#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "ergodic/errors.hpp"
#include "ergodic/harness.hpp"

using namespace ergodic;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("ergodic_test_" + name);
}

ExperimentConfig small_clt(std::size_t replications, std::uint64_t n) {
  ExperimentConfig c;
  c.n_steps = n;
  c.replications = replications;
  c.regime_horizon = 10'000;
  c.threads = 1;
  return c;
}

// Independent KS distance with the normal cdf from erfc.
double ks_oracle(std::vector<double> x, double mean, double variance) {
  std::sort(x.begin(), x.end());
  const double r = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = 0.5 * std::erfc(-(x[i] - mean) / std::sqrt(2.0 * variance));
    d = std::max(d, std::max((i + 1) / r - f, f - i / r));
  }
  return d;
}

}  // namespace

TEST_CASE("regime classifier examples") {
  const auto third = StepSchedule::power_law(1.0, 1.0 / 3.0);
  const auto fifth = StepSchedule::power_law(1.0, 0.2);
  CHECK(classify_regime(third, 1, 1'000'000).regime == Regime::B_mixed);
  CHECK(classify_regime(third, 2, 1'000'000).regime == Regime::A_centered);
  CHECK(classify_regime(fifth, 2, 1'000'000).regime == Regime::B_mixed);
  const auto c = classify_regime(third, 1, 100'000);
  CHECK(c.n.front() == 1000);
  CHECK(c.n.back() == 100'000);
  CHECK(c.n.size() == c.ratio.size());
  CHECK(std::abs(c.slope) < kRegimeSlopeThreshold);
}

TEST_CASE("regime classifier agrees with the analytic rule on the probed grid") {
  for (int q = 1; q <= 2; ++q) {
    for (int j = 1; j <= 9; ++j) {
      const double xi = j / 10.0;
      CAPTURE(xi);
      CAPTURE(q);
      RegimeClassification c;
      REQUIRE_NOTHROW(c = classify_regime(StepSchedule::power_law(1.0, xi), q, 1'000'000));
      CHECK(c.regime == c.analytic);
      // Oracle: sign of the exponent computed from xi directly.
      const double critical = 1.0 / (2 * q + 1);
      const Regime expected = std::abs(xi - critical) < 1e-12 ? Regime::B_mixed
                              : xi > critical                ? Regime::A_centered
                                                             : Regime::C_bias;
      CHECK(c.analytic == expected);
    }
  }
}

TEST_CASE("regime exponent vanishes at the critical step decay") {
  CHECK(regime_exponent(1.0 / 3.0, 1) == doctest::Approx(0.0).epsilon(0).scale(1).epsilon(1e-15));
  CHECK(std::abs(regime_exponent(0.2, 2)) < 1e-15);
  CHECK(regime_exponent(1.0 / 3.0, 2) == doctest::Approx(1.0 / 3.0));
  CHECK(analytic_regime(0.333, 1) == Regime::B_mixed);
  CHECK(analytic_regime(0.5, 1) == Regime::A_centered);
  CHECK(analytic_regime(0.1, 2) == Regime::C_bias);
}

TEST_CASE("regime classifier preconditions") {
  CHECK_THROWS_AS(classify_regime(StepSchedule::constant(0.1), 1, 100'000), ConfigError);
  CHECK_THROWS_AS(classify_regime(StepSchedule::power_law(1.0, 0.5), 1, 1000), ConfigError);
}

TEST_CASE("ks normality") {
  std::mt19937_64 engine(7);
  std::normal_distribution<double> normal(1.5, 2.0);
  std::vector<double> samples(200);
  for (auto& s : samples) s = normal(engine);
  const auto ok = ks_normality(samples, 4.0, 1.5);
  CHECK(ok.pass);
  CHECK(ok.critical == doctest::Approx(1.628 / std::sqrt(200.0)));
  CHECK(ok.distance == doctest::Approx(ks_oracle(samples, 1.5, 4.0)).epsilon(1e-12));

  const std::vector<double> constant(60, 1.5);
  const auto flat = ks_normality(constant, 4.0, 1.5);
  CHECK(flat.distance == doctest::Approx(0.5));
  CHECK_FALSE(flat.pass);

  std::vector<double> shifted = samples;
  for (auto& s : shifted) s += 10.0;
  CHECK_FALSE(ks_normality(shifted, 4.0, 1.5).pass);

  CHECK_THROWS_AS(ks_normality(samples, 0.0, 0.0), Error);
  CHECK_THROWS_AS(ks_normality(samples, -1.0, 0.0), Error);
  CHECK_THROWS_AS(ks_normality(std::span(samples).first(49), 4.0, 1.5), Error);
}

TEST_CASE("log-log fit") {
  const std::vector<double> n{1e2, 1e4};
  const std::vector<double> e{1e-1, 1e-2};
  const auto two = fit_log_log(n, e);
  CHECK(two.slope == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(std::isnan(two.ci_low));

  std::vector<double> n5;
  std::vector<double> e5;
  for (double v : {1e4, 3e4, 1e5, 3e5, 1e6}) {
    n5.push_back(v);
    e5.push_back(2.0 * std::pow(v, -1.0 / 3.0));
  }
  const auto line = fit_log_log(n5, e5);
  CHECK(line.slope == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
  CHECK(line.ci_low <= line.slope);
  CHECK(line.ci_high >= line.slope);
  CHECK(line.ci_high - line.ci_low < 1e-10);

  CHECK_THROWS_AS(fit_log_log(std::vector<double>{1.0}, std::vector<double>{1.0}), Error);
  CHECK_THROWS_AS(fit_log_log(n, std::vector<double>{1.0, 0.0}), Error);
}

TEST_CASE("rate targets") {
  CHECK(rate_target(1.0 / 3.0, 1) == doctest::Approx(-1.0 / 3.0));
  CHECK(rate_target(0.2, 2) == doctest::Approx(-0.4));
  CHECK(rate_target(0.5, 1) == doctest::Approx(-0.25));
}

TEST_CASE("config parsing") {
  const auto c = parse_config(
      "# OU run\n"
      "model = ou1d\n"
      "model.sigma = 2   # trailing comment\n"
      "scheme = talay2\n"
      "weight.kind = trapezoidal\n"
      "step.xi = 0.2\n"
      "checkpoints = 10, 100,1000\n"
      "n_steps = 1e3\n"
      "\n"
      "x0 = 0.5\n");
  CHECK(c.sigma == 2.0);
  CHECK(c.scheme == Scheme::talay2);
  CHECK(c.weight_kind == WeightKind::trapezoidal);
  CHECK(c.xi == 0.2);
  CHECK(c.checkpoints == std::vector<std::uint64_t>{10, 100, 1000});
  CHECK(c.n_steps == 1000);
  CHECK(c.x0 == std::vector<double>{0.5});
  CHECK(config_keys().size() == 24);

  try {
    parse_config("bogus.key = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus.key") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("step.xi = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("scheme = milstein\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("checkpoints = 10,5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("n_steps = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);

  try {
    load_config("/nonexistent/missing.toml");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("missing.toml") != std::string::npos);
  }
}

TEST_CASE("effective checkpoints and experiment building") {
  ExperimentConfig c;
  c.n_steps = 500;
  CHECK(effective_checkpoints(c) == std::vector<std::uint64_t>{500});
  c.checkpoints = {10, 100};
  CHECK(effective_checkpoints(c) == std::vector<std::uint64_t>{10, 100, 500});
  c.checkpoints = {10, 1000};
  CHECK_THROWS_AS(effective_checkpoints(c), ConfigError);

  ExperimentConfig bad;
  bad.model = "heston";
  CHECK_THROWS_AS(build_experiment(bad), ConfigError);
  ExperimentConfig nd;
  nd.model = "ou_nd";
  CHECK_THROWS_AS(build_experiment(nd), ConfigError);
  nd.theta_matrix = "1,0;0,2";
  nd.sigma_matrix = "1,0;0,1";
  nd.f = "x1*x2";
  const auto e = build_experiment(nd);
  CHECK(e.model.dim == 2);
  CHECK(e.x0 == Vector{0.0, 0.0});
  CHECK(e.law.has_value());
  nd.x0 = {1.0};
  CHECK_THROWS_AS(build_experiment(nd), ConfigError);
}

TEST_CASE("clt statistic normalization") {
  auto c = small_clt(3, 1000);
  c.checkpoints = {100, 1000};
  const auto report = run_clt_experiment(c);
  REQUIRE(report.summaries.size() == 2);
  const auto steps = StepSchedule::power_law(1.0, 1.0 / 3.0);
  for (const auto& s : report.summaries) {
    CHECK(s.normalization == doctest::Approx(std::sqrt(steps.big_gamma(s.n))).epsilon(1e-14));
  }
  std::ostringstream csv;
  write_csv(report, csv);
  std::istringstream lines(csv.str());
  std::string line;
  std::size_t rows = 0;
  std::getline(lines, line);
  CHECK(line == "checkpoint_n,replication,statistic");
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 6);

  c.scheme = Scheme::talay2;
  c.weight_kind = WeightKind::trapezoidal;
  c.weight_c = 2.5;
  const auto trap = run_clt_experiment(c);
  for (const auto& s : trap.summaries) {
    const double g = steps.big_gamma(s.n);
    const double g1 = steps.big_gamma(s.n - 1);
    CHECK(s.normalization == doctest::Approx((g + g1) / (2.0 * std::sqrt(g))).epsilon(1e-13));
  }
  CHECK(trap.q == 2);
  CHECK(trap.regime == Regime::A_centered);
}

TEST_CASE("clt predictions on the reference OU model") {
  auto c = small_clt(4, 2000);
  const auto report = run_clt_experiment(c);
  CHECK(report.regime == Regime::B_mixed);
  CHECK(report.variance_source == "analytic");
  CHECK(report.predicted_variance == doctest::Approx(8.0).epsilon(1e-12));
  REQUIRE(report.nu_mf.has_value());
  CHECK(*report.nu_mf == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(report.nu_mf_source == "analytic");
  REQUIRE(report.nu_mf_empirical.has_value());
  // Finite-n inverse of l-hat from direct sums.
  const auto steps = StepSchedule::power_law(1.0, 1.0 / 3.0);
  long double h2 = 0.0L;
  for (std::uint64_t k = 1; k <= 2000; ++k) h2 += std::pow(static_cast<long double>(steps.gamma(k)), 2.0L);
  REQUIRE(report.lhat_inverse.has_value());
  CHECK(*report.lhat_inverse == doctest::Approx(static_cast<double>(h2) / std::sqrt(steps.big_gamma(2000))).epsilon(1e-12));
  CHECK(report.summaries.back().mean_hypothesis == doctest::Approx(-*report.lhat_inverse));

  c.scheme = Scheme::talay2;
  const auto talay = run_clt_experiment(c);
  REQUIRE(talay.nu_mf.has_value());
  CHECK(*talay.nu_mf == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK_FALSE(talay.warnings.empty());
}

TEST_CASE("clt with zero diffusion is deterministic") {
  auto c = small_clt(3, 500);
  c.sigma = 0.0;
  c.x0 = {1.0};
  const auto report = run_clt_experiment(c);
  REQUIRE(report.samples.back().size() == 3);
  CHECK(report.samples.back()[0] == report.samples.back()[1]);
  CHECK(report.samples.back()[1] == report.samples.back()[2]);
  CHECK(report.summaries.back().stats.variance < 1e-28);
  CHECK(report.predicted_variance == 0.0);
  CHECK(report.variance_source == "ergodic");
}

TEST_CASE("clt warns about innovations with too few matched moments") {
  auto c = small_clt(2, 200);
  c.scheme = Scheme::talay2;
  c.weight_kind = WeightKind::trapezoidal;
  c.innovation = InnovationKind::rademacher;
  const auto report = run_clt_experiment(c);
  bool found = false;
  for (const auto& w : report.warnings) found = found || w.find("rademacher") != std::string::npos;
  CHECK(found);
}

TEST_CASE("clt preconditions") {
  auto c = small_clt(1, 100);
  CHECK_THROWS_AS(run_clt_experiment(c), ConfigError);
  c.replications = 3;
  c.weight_kind = WeightKind::power;
  CHECK_THROWS_AS(run_clt_experiment(c), ConfigError);
  c.weight_kind = WeightKind::proportional;
  c.step_kind = StepKind::constant;
  c.gamma1 = 0.1;
  CHECK_THROWS_AS(run_clt_experiment(c), ConfigError);
}

TEST_CASE("divergent replications are excluded and reported") {
  auto c = small_clt(3, 2000);
  c.gamma1 = 50.0;
  c.x0 = {1.0};
  const auto report = run_clt_experiment(c);
  CHECK(report.diverged.size() == 3);
  CHECK(report.failed);
  CHECK(report.replications.empty());
  CHECK(report.diverged[1].replication == 1);
  CHECK(report.diverged[1].master_seed == c.seed);
  CHECK(report.diverged[1].step > 0);
}

TEST_CASE("replications do not depend on execution order") {
  auto c = small_clt(8, 3000);
  c.checkpoints = {1000, 3000};
  const auto serial = run_clt_experiment(c);
  c.threads = 4;
  const auto parallel = run_clt_experiment(c);
  REQUIRE(serial.samples.size() == parallel.samples.size());
  for (std::size_t i = 0; i < serial.samples.size(); ++i) {
    REQUIRE(serial.samples[i].size() == 8);
    for (std::size_t r = 0; r < 8; ++r) {
      CHECK(std::memcmp(&serial.samples[i][r], &parallel.samples[i][r], sizeof(double)) == 0);
    }
  }
  CHECK(serial.ergodic_variance == parallel.ergodic_variance);
}

TEST_CASE("rate experiment preconditions and small run") {
  ExperimentConfig c;
  c.n_steps = 1000;
  c.replications = 50;
  c.checkpoints = {100, 1000};
  c.threads = 1;
  CHECK_THROWS_AS(run_rate_experiment(c), ConfigError);
  c.checkpoints = {100, 300, 1000};
  c.replications = 49;
  CHECK_THROWS_AS(run_rate_experiment(c), ConfigError);
  c.replications = 50;
  const auto report = run_rate_experiment(c);
  CHECK(report.rms_error.size() == 3);
  CHECK(std::isfinite(report.fit.slope));
  CHECK(std::isfinite(report.fit.ci_low));
  CHECK(report.target == doctest::Approx(-1.0 / 3.0));
  std::ostringstream csv;
  write_csv(report, csv);
  CHECK(csv.str().rfind("n,rms_error\n100,", 0) == 0);
}

TEST_CASE("ergodic experiment and trace") {
  ExperimentConfig c;
  c.n_steps = 2000;
  c.replications = 2;
  c.checkpoints = {200, 2000};
  c.threads = 1;
  const auto report = run_ergodic_experiment(c);
  REQUIRE(report.reference.has_value());
  CHECK(*report.reference == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.values.size() == 2);
  CHECK(report.w1.size() == 2);
  CHECK(report.w1[1].size() == 2);
  CHECK(report.mean_w1[1] > 0.0);

  ExperimentConfig t;
  t.n_steps = 100;
  const auto trace = run_trace(t);
  std::vector<std::uint64_t> n;
  for (const auto& row : trace) n.push_back(row.n);
  CHECK(n == std::vector<std::uint64_t>{1, 2, 5, 10, 20, 50, 100});
  CHECK(trace.front().value == 0.0);  // X_0 = 0 and f = x^2
  CHECK(trace.back().h == doctest::Approx(StepSchedule::power_law(1.0, 1.0 / 3.0).big_gamma(100)));
}

TEST_CASE("emit round trips") {
  auto c = small_clt(3, 1000);
  c.checkpoints = {100, 1000};
  const auto report = run_clt_experiment(c);

  const auto json_path = temp_path("clt.json");
  emit(report, Format::json, json_path);
  std::ifstream in(json_path);
  const auto parsed = nlohmann::json::parse(in);
  for (std::size_t i = 0; i < report.samples.size(); ++i) {
    for (std::size_t r = 0; r < report.samples[i].size(); ++r) {
      CHECK(parsed["samples"][i][r].get<double>() == report.samples[i][r]);
    }
  }
  CHECK(parsed["predicted_variance"].get<double>() == report.predicted_variance);
  CHECK(parsed["summaries"][1]["variance"].get<double>() == report.summaries[1].stats.variance);

  const auto csv_path = temp_path("clt.csv");
  emit(report, Format::csv, csv_path);
  std::ifstream csv(csv_path);
  std::string line;
  std::getline(csv, line);
  std::size_t row = 0;
  while (std::getline(csv, line)) {
    const auto value = std::strtod(line.substr(line.rfind(',') + 1).c_str(), nullptr);
    CHECK(value == report.samples[row / 3][row % 3]);
    ++row;
  }
  CHECK(row == 6);
  std::filesystem::remove(json_path);
  std::filesystem::remove(csv_path);

  CHECK_THROWS_AS(emit(report, Format::csv, "/nonexistent/dir/out.csv"), Error);
  try {
    emit(report, Format::csv, "/nonexistent/dir/out.csv");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/out.csv") != std::string::npos);
  }
}

TEST_CASE("empty reports serialize to header-only csv") {
  std::ostringstream clt;
  write_csv(CltReport{}, clt);
  CHECK(clt.str() == "checkpoint_n,replication,statistic\n");
  std::ostringstream rate;
  write_csv(RateReport{}, rate);
  CHECK(rate.str() == "n,rms_error\n");
}

TEST_CASE("format selection") {
  CHECK(format_for("a/b.json") == Format::json);
  CHECK(format_for("a/b.csv") == Format::csv);
  CHECK(format_for("out") == Format::csv);
  CHECK(parse_format("json") == Format::json);
  CHECK_THROWS_AS(parse_format("xml"), ConfigError);
}
