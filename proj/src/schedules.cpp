#include "ergodic/schedules.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "ergodic/errors.hpp"

namespace ergodic {

StepSchedule::StepSchedule(StepKind kind, double gamma1, double xi)
    : kind_(kind), gamma1_(gamma1), xi_(xi) {
  if (!(gamma1 > 0.0) || !std::isfinite(gamma1)) {
    throw ConfigError("step.gamma1 must be a positive finite number");
  }
  if (kind == StepKind::power_law && !(xi > 0.0 && xi < 1.0)) {
    throw ConfigError("step.xi must lie in (0, 1) for power_law steps");
  }
}

StepSchedule StepSchedule::power_law(double gamma1, double xi) {
  return StepSchedule(StepKind::power_law, gamma1, xi);
}

StepSchedule StepSchedule::constant(double gamma) { return StepSchedule(StepKind::constant, gamma, 0.0); }

double StepSchedule::gamma_unchecked(std::uint64_t n) const noexcept {
  if (kind_ == StepKind::constant || n == 1) return gamma1_;
  return gamma1_ * std::pow(static_cast<double>(n), -xi_);
}

double StepSchedule::gamma(std::uint64_t n) const {
  if (n == 0) throw std::out_of_range("gamma_n is defined for n >= 1");
  return gamma_unchecked(n);
}

double StepSchedule::big_gamma(std::uint64_t n) const {
  return sums_.at(n, [this](std::uint64_t k) { return gamma_unchecked(k); });
}

WeightSchedule::WeightSchedule(StepSchedule steps, WeightKind kind, double c, double r)
    : steps_(std::move(steps)), kind_(kind), c_(c), r_(r) {
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("weight.c must be a positive finite number");
  if (kind == WeightKind::power && !std::isfinite(r)) throw ConfigError("weight.r must be finite");
}

WeightSchedule WeightSchedule::proportional(StepSchedule steps, double c) {
  return WeightSchedule(std::move(steps), WeightKind::proportional, c, 1.0);
}

WeightSchedule WeightSchedule::trapezoidal(StepSchedule steps, double c) {
  return WeightSchedule(std::move(steps), WeightKind::trapezoidal, c, 1.0);
}

WeightSchedule WeightSchedule::power(StepSchedule steps, double r) {
  return WeightSchedule(std::move(steps), WeightKind::power, 1.0, r);
}

double WeightSchedule::eta_unchecked(std::uint64_t n) const noexcept {
  switch (kind_) {
    case WeightKind::proportional:
      return c_ * steps_.gamma(n);
    case WeightKind::trapezoidal: {
      const double previous = n == 1 ? 0.0 : steps_.gamma(n - 1);
      return c_ * (previous + steps_.gamma(n)) / 2.0;
    }
    case WeightKind::power:
      return std::pow(steps_.gamma(n), r_);
  }
  return 0.0;
}

double WeightSchedule::eta(std::uint64_t n) const {
  if (n == 0) throw std::out_of_range("eta_n is defined for n >= 1");
  return eta_unchecked(n);
}

double WeightSchedule::big_h(std::uint64_t n) const {
  return sums_.at(n, [this](std::uint64_t k) { return eta_unchecked(k); });
}

std::string to_string(StepKind kind) { return kind == StepKind::power_law ? "power_law" : "constant"; }

std::string to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::proportional:
      return "proportional";
    case WeightKind::trapezoidal:
      return "trapezoidal";
    case WeightKind::power:
      return "power";
  }
  return "?";
}

StepKind parse_step_kind(const std::string& text) {
  if (text == "power_law") return StepKind::power_law;
  if (text == "constant") return StepKind::constant;
  throw ConfigError("unknown step.kind '" + text + "' (expected power_law or constant)");
}

WeightKind parse_weight_kind(const std::string& text) {
  if (text == "proportional") return WeightKind::proportional;
  if (text == "trapezoidal") return WeightKind::trapezoidal;
  if (text == "power") return WeightKind::power;
  throw ConfigError("unknown weight.kind '" + text + "' (expected proportional, trapezoidal or power)");
}

}  // namespace ergodic
