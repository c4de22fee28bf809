#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ergodic/catalog.hpp"
#include "ergodic/empirical.hpp"
#include "ergodic/schedules.hpp"
#include "ergodic/schemes.hpp"

namespace ergodic {

/// Flat `key = value` experiment description. See README for the key list.
struct ExperimentConfig {
  std::string model = "ou1d";
  double theta = 1.0;
  double sigma = 1.4142135623730951;
  std::string theta_matrix;
  std::string sigma_matrix;
  Scheme scheme = Scheme::euler;
  InnovationKind innovation = InnovationKind::three_point;
  StepKind step_kind = StepKind::power_law;
  double gamma1 = 1.0;
  double xi = 1.0 / 3.0;
  WeightKind weight_kind = WeightKind::proportional;
  double weight_c = 1.0;
  double weight_r = 2.0;
  std::string f = "x^2";
  std::uint64_t n_steps = 100'000;
  std::size_t replications = 20;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> checkpoints;  // empty: just n_steps
  std::vector<double> x0;                  // empty: the origin
  std::string output;
  unsigned threads = 0;  // 0: hardware concurrency
  std::size_t buffer_capacity = 0;
  std::uint64_t burn_in = 0;
  std::uint64_t regime_horizon = 10'000'000;
};

/// Every key accepted by set_config_value, in documentation order.
const std::vector<std::string>& config_keys();
/// Sets one key from its text form. Unknown keys and bad values throw ConfigError naming the key.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
/// Parses `key = value` lines; '#' starts a comment.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
/// Reads a config file; a missing file throws ConfigError naming the path.
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
nlohmann::json to_json(const ExperimentConfig& config);
/// Checkpoints with n_steps appended when missing, validated increasing and <= n_steps.
std::vector<std::uint64_t> effective_checkpoints(const ExperimentConfig& config);

/// The runtime objects a config describes.
struct Experiment {
  DiffusionModel model;
  std::optional<InvariantLaw> law;
  StepSchedule steps = StepSchedule::constant(1.0);
  WeightSchedule weights = WeightSchedule::proportional(StepSchedule::constant(1.0));
  Observable f;
  ChainSpec chain;
  Vector x0;
};
Experiment build_experiment(const ExperimentConfig& config);

/// CLT order q: 2 for the Talay scheme with trapezoidal weights, 1 otherwise.
int clt_order(Scheme scheme, WeightKind weights);

enum class Regime { A_centered, B_mixed, C_bias };
std::string to_string(Regime regime);

/// Slope threshold separating a growing or decaying ratio from a flat one.
inline constexpr double kRegimeSlopeThreshold = 0.02;

/// Growth exponent of r_n = sqrt(Gamma_n) / H_{gamma^{q+1}, n} for power-law steps:
/// (1 - xi)/2 - max(0, 1 - (q+1) xi). It vanishes exactly at xi = 1/(2q+1).
double regime_exponent(double xi, int q);

/// Analytic rule from the exponent: A above +0.02, C below -0.02, B in between,
/// so that xi within about 0.01 of 1/(2q+1) counts as the critical case.
Regime analytic_regime(double xi, int q);

struct RegimeClassification {
  Regime regime = Regime::B_mixed;
  Regime analytic = Regime::B_mixed;
  double slope = 0.0;  // log-log slope of r_n over the last decade of the grid
  std::vector<std::uint64_t> n;
  std::vector<double> ratio;  // r_n = sqrt(Gamma_n) / H_{gamma^{q+1}, n}
};

/// Classifies the trend of r_n on a log grid (4 points per decade from 10^3) up to n_max.
/// Throws Error when the numeric trend disagrees with the analytic rule.
RegimeClassification classify_regime(const StepSchedule& steps, int q, std::uint64_t n_max);

struct KsResult {
  double distance = 0.0;
  double critical = 0.0;
  bool pass = false;
};
inline constexpr double kKsCoefficient01 = 1.628;
/// One-sample Kolmogorov-Smirnov test against N(mean, variance) at level 0.01.
KsResult ks_normality(std::span<const double> samples, double variance, double mean);

struct DivergedReplication {
  std::size_t replication = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t step = 0;
  std::string message;
};

struct CheckpointSummary {
  std::uint64_t n = 0;
  double normalization = 0.0;   // H_n / (C sqrt(Gamma_n))
  double mean_hypothesis = 0.0; // 0 in regime A, H_{gamma^{q+1},n}/sqrt(Gamma_n) nu(M_q f) otherwise
  SummaryStats stats;
  KsResult ks;
};

struct CltReport {
  ExperimentConfig config;
  int q = 1;
  Regime regime = Regime::B_mixed;
  RegimeClassification classification;
  std::vector<std::uint64_t> checkpoints;
  std::vector<std::size_t> replications;            // indices of the replications kept
  std::vector<std::vector<double>> samples;         // [checkpoint][kept replication]
  std::vector<CheckpointSummary> summaries;
  double predicted_variance = 0.0;                  // nu(Vf)
  std::string variance_source;                      // "analytic" or "ergodic"
  double ergodic_variance = 0.0;                    // mean over replications of nu_n^gamma(Vf)
  std::optional<double> nu_mf;                      // nu(M_q f) used for the mean shift
  std::string nu_mf_source;                         // "analytic" or "empirical"
  std::optional<double> nu_mf_empirical;            // nu_n(M_q f) over buffered atoms
  std::optional<double> lhat_inverse;               // H_{gamma^{q+1},n} / sqrt(Gamma_n) at the last checkpoint
  std::vector<DivergedReplication> diverged;
  bool failed = false;                              // more than 5% of replications excluded
  std::vector<std::string> warnings;
};

CltReport run_clt_experiment(const ExperimentConfig& config);

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_low = 0.0;   // 95% Student-t interval; NaN with two points
  double ci_high = 0.0;
};
LogLogFit fit_log_log(std::span<const double> n, std::span<const double> error);

/// Theoretical slope -min(q xi, 1/2 - xi/2).
double rate_target(double xi, int q);
inline constexpr double kRateTolerance = 0.12;

struct RateReport {
  ExperimentConfig config;
  int q = 1;
  std::vector<std::uint64_t> n;
  std::vector<double> rms_error;
  LogLogFit fit;
  double target = 0.0;
  double tolerance = kRateTolerance;
  bool within_tolerance = false;
  std::vector<DivergedReplication> diverged;
  bool failed = false;
  std::vector<std::string> warnings;
};

/// RMS over replications of nu_n^eta(Af) at each checkpoint, and its log-log slope.
RateReport run_rate_experiment(const ExperimentConfig& config);

struct ErgodicReport {
  ExperimentConfig config;
  std::vector<std::uint64_t> checkpoints;
  std::vector<std::size_t> replications;
  std::vector<std::vector<double>> values;  // nu_n^eta(f) [checkpoint][replication]
  std::vector<std::vector<double>> w1;      // W1 to the invariant law; empty when unavailable
  std::vector<double> mean_value;
  std::vector<double> mean_w1;
  std::optional<double> reference;          // nu(f) when the invariant law is known
  std::vector<DivergedReplication> diverged;
  bool failed = false;
  std::vector<std::string> warnings;
};

/// Ergodic averages of f and W1 distances to the invariant law at each checkpoint.
ErgodicReport run_ergodic_experiment(const ExperimentConfig& config);

struct TraceRow {
  std::uint64_t n = 0;
  double gamma = 0.0;
  double h = 0.0;
  double value = 0.0;
};
/// One trajectory (replication 0): nu_n^eta(f) at each checkpoint.
std::vector<TraceRow> run_trace(const ExperimentConfig& config);

enum class Format { csv, json };
Format parse_format(const std::string& text);
/// csv for anything but a .json extension.
Format format_for(const std::filesystem::path& path);

nlohmann::json to_json(const CltReport& report);
nlohmann::json to_json(const RateReport& report);
nlohmann::json to_json(const ErgodicReport& report);

/// CSV `checkpoint_n,replication,statistic`.
void write_csv(const CltReport& report, std::ostream& out);
/// CSV `n,rms_error`.
void write_csv(const RateReport& report, std::ostream& out);
/// CSV `checkpoint_n,replication,value,w1`.
void write_csv(const ErgodicReport& report, std::ostream& out);
/// CSV `n,gamma_n,H_n,value`.
void write_csv(std::span<const TraceRow> trace, std::ostream& out);

void emit(const CltReport& report, Format format, const std::filesystem::path& path);
void emit(const RateReport& report, Format format, const std::filesystem::path& path);
void emit(const ErgodicReport& report, Format format, const std::filesystem::path& path);
/// Writes text to a file, throwing Error with the path on failure.
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ergodic
