#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ergodic/compensated_sum.hpp"

namespace ergodic {

// Running partial sums S_n = sum_{k<=n} term(k) with a forward cursor and a
// sparse table of saved accumulator states. Forward access is O(1) amortized;
// a backward jump restarts from the nearest saved state, so the value at n
// does not depend on the order in which indices were queried.
//
// Not safe for concurrent use: each worker holds its own copy.
class PartialSums {
 public:
  template <class Term>
  double at(std::uint64_t n, Term&& term) const {
    if (n < cursor_) {
      const std::uint64_t mark = n / kStride;
      cursor_ = mark * kStride;
      running_ = marks_[mark];
    }
    while (cursor_ < n) {
      ++cursor_;
      running_.add(term(cursor_));
      if (cursor_ % kStride == 0 && marks_.size() == cursor_ / kStride) {
        marks_.push_back(running_);
      }
    }
    return running_.value();
  }

 private:
  static constexpr std::uint64_t kStride = 1024;

  mutable std::uint64_t cursor_ = 0;
  mutable CompensatedSum running_{};
  mutable std::vector<CompensatedSum> marks_{CompensatedSum{}};
};

enum class StepKind { power_law, constant };

/// Step sequence gamma_n with partial sums Gamma_n. The step bound is gamma_1.
class StepSchedule {
 public:
  /// gamma_n = gamma1 * n^{-xi}, xi in (0, 1).
  static StepSchedule power_law(double gamma1, double xi);
  static StepSchedule constant(double gamma);

  StepKind kind() const noexcept { return kind_; }
  double gamma1() const noexcept { return gamma1_; }
  double xi() const noexcept { return xi_; }

  /// gamma_n for n >= 1; n = 0 throws std::out_of_range.
  double gamma(std::uint64_t n) const;
  /// Gamma_n = sum_{k<=n} gamma_k, Gamma_0 = 0.
  double big_gamma(std::uint64_t n) const;

 private:
  StepSchedule(StepKind kind, double gamma1, double xi);
  double gamma_unchecked(std::uint64_t n) const noexcept;

  StepKind kind_;
  double gamma1_;
  double xi_;
  PartialSums sums_;
};

enum class WeightKind { proportional, trapezoidal, power };

/// Weight sequence eta_n built on a step schedule, with partial sums H_n.
class WeightSchedule {
 public:
  /// eta_n = c gamma_n.
  static WeightSchedule proportional(StepSchedule steps, double c = 1.0);
  /// eta_n = c (gamma_{n-1} + gamma_n) / 2 with gamma_0 = 0.
  static WeightSchedule trapezoidal(StepSchedule steps, double c = 1.0);
  /// eta_n = gamma_n^r.
  static WeightSchedule power(StepSchedule steps, double r);

  WeightKind kind() const noexcept { return kind_; }
  double c() const noexcept { return c_; }
  double r() const noexcept { return r_; }
  const StepSchedule& steps() const noexcept { return steps_; }

  double eta(std::uint64_t n) const;
  /// H_n = sum_{k<=n} eta_k, defined for n >= 0 (H_0 = 0).
  double big_h(std::uint64_t n) const;

 private:
  WeightSchedule(StepSchedule steps, WeightKind kind, double c, double r);
  double eta_unchecked(std::uint64_t n) const noexcept;

  StepSchedule steps_;
  WeightKind kind_;
  double c_;
  double r_;
  PartialSums sums_;
};

std::string to_string(StepKind kind);
std::string to_string(WeightKind kind);
StepKind parse_step_kind(const std::string& text);
WeightKind parse_weight_kind(const std::string& text);

}  // namespace ergodic
