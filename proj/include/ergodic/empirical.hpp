#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ergodic/compensated_sum.hpp"
#include "ergodic/model.hpp"
#include "ergodic/schemes.hpp"

namespace ergodic {

struct WeightedAtom {
  double x = 0.0;
  double weight = 0.0;
};

/// Deterministically decimated store of weighted pre-step states. Every
/// stride-th record is kept with its own weight; when the store fills up,
/// every other atom is dropped and the stride doubles.
class SampleBuffer {
 public:
  SampleBuffer(std::size_t dim, std::size_t capacity);

  void offer(ConstVec x, double weight);
  std::size_t size() const noexcept { return weights_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t stride() const noexcept { return stride_; }
  ConstVec state(std::size_t i) const { return ConstVec(states_).subspan(i * dim_, dim_); }
  double weight(std::size_t i) const { return weights_[i]; }
  /// Atoms of a one-dimensional buffer.
  std::vector<WeightedAtom> atoms() const;

 private:
  std::size_t dim_;
  std::size_t capacity_;
  std::size_t stride_ = 1;
  std::uint64_t offered_ = 0;
  std::vector<double> states_;
  std::vector<double> weights_;
};

struct MeasureOptions {
  std::size_t buffer_capacity = 0;  // 0 disables the sample buffer
  std::uint64_t burn_in = 0;        // records skipped before accumulation starts
  bool log_trajectory = false;      // keep every (state, weight) for offline checks
};

/// nu_n^eta(f) = sum_k eta_k f(X_{k-1}) / H_n, accumulated online.
class WeightedEmpiricalMeasure final : public StateSink {
 public:
  explicit WeightedEmpiricalMeasure(std::size_t dim, MeasureOptions options = {});

  void add_observable(std::string name, Observable f);
  /// Records the pre-step state X_{k-1} with weight eta_k. Negative weights throw.
  void record(ConstVec x, double eta);
  void observe(std::uint64_t k, ConstVec x, double gamma, double eta) override;

  /// Throws for an unknown name or before the first accumulated record.
  double value(std::string_view name) const;
  double total_weight() const noexcept { return h_.value(); }
  std::uint64_t count() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  const std::optional<SampleBuffer>& buffer() const noexcept { return buffer_; }
  const std::vector<double>& trajectory_states() const noexcept { return log_states_; }
  const std::vector<double>& trajectory_weights() const noexcept { return log_weights_; }

  void reset();

  /// CSV `name,value,H_n,n`, one row per observable.
  void write_snapshot_csv(std::ostream& out) const;
  /// CSV `state_0,...,state_{d-1},weight`.
  void write_buffer_csv(std::ostream& out) const;

 private:
  std::size_t dim_;
  MeasureOptions options_;
  std::vector<std::string> names_;
  std::vector<Observable> observables_;
  std::vector<CompensatedSum> sums_;
  CompensatedSum h_;
  std::uint64_t n_ = 0;
  std::uint64_t seen_ = 0;
  std::optional<SampleBuffer> buffer_;
  std::vector<double> log_states_;
  std::vector<double> log_weights_;
};

/// A one-dimensional reference law. `cdf_integral`, when present, is an
/// antiderivative of the cdf; otherwise integrals of the cdf are computed by
/// adaptive Gauss-Kronrod quadrature.
struct AnalyticLaw1D {
  std::function<double(double)> cdf;
  std::function<double(double)> quantile;
  std::function<double(double)> cdf_integral;
  std::vector<double> moments;  // E[X^k], k = 1, 2, ... when known
};

AnalyticLaw1D normal_law(double mean, double stddev);

/// Law with a tabulated unnormalized density on [lo, hi] (piecewise-linear cdf).
AnalyticLaw1D tabulated_law(const std::function<double(double)>& density, double lo, double hi, std::size_t points);

inline constexpr double kTailProbability = 1e-6;

/// W1 between a weighted discrete measure and a continuous law, integrating
/// |F_n - F| exactly between atoms over [min(atoms, Q(1e-6)), max(atoms, Q(1-1e-6))].
double wasserstein1(std::span<const WeightedAtom> atoms, const AnalyticLaw1D& law);
/// W1 between two weighted discrete measures.
double wasserstein1(std::span<const WeightedAtom> a, std::span<const WeightedAtom> b);
/// W1 between the buffered atoms of a one-dimensional measure and `law`.
double wasserstein1_to(const WeightedEmpiricalMeasure& measure, const AnalyticLaw1D& law);

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;         // unbiased
  double skewness = 0.0;         // m3 / m2^{3/2}; 0 when the sample is constant
  double excess_kurtosis = 0.0;  // m4 / m2^2 - 3; 0 when the sample is constant
  double se_mean = 0.0;
  double se_variance = 0.0;
  double se_skewness = 0.0;
  double se_kurtosis = 0.0;
};

/// Cross-replication summary. Needs at least two values.
SummaryStats merge_statistics(std::span<const double> values);

}  // namespace ergodic
