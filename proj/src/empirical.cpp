#include "ergodic/empirical.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "ergodic/errors.hpp"
#include "ergodic/format.hpp"

namespace ergodic {

SampleBuffer::SampleBuffer(std::size_t dim, std::size_t capacity) : dim_(dim), capacity_(capacity) {
  if (capacity < 2) throw std::invalid_argument("sample buffer capacity must be at least 2");
  states_.reserve(capacity * dim);
  weights_.reserve(capacity);
}

void SampleBuffer::offer(ConstVec x, double weight) {
  if (offered_++ % stride_ != 0) return;
  states_.insert(states_.end(), x.begin(), x.end());
  weights_.push_back(weight);
  if (weights_.size() < capacity_) return;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < weights_.size(); i += 2, ++kept) {
    std::copy_n(states_.begin() + static_cast<std::ptrdiff_t>(i * dim_), dim_,
                states_.begin() + static_cast<std::ptrdiff_t>(kept * dim_));
    weights_[kept] = weights_[i];
  }
  states_.resize(kept * dim_);
  weights_.resize(kept);
  stride_ *= 2;
}

std::vector<WeightedAtom> SampleBuffer::atoms() const {
  if (dim_ != 1) throw UnsupportedError("atoms() is defined for one-dimensional buffers only");
  std::vector<WeightedAtom> out(weights_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {states_[i], weights_[i]};
  return out;
}

WeightedEmpiricalMeasure::WeightedEmpiricalMeasure(std::size_t dim, MeasureOptions options)
    : dim_(dim), options_(options) {
  if (options_.buffer_capacity > 0) buffer_.emplace(dim, options_.buffer_capacity);
}

void WeightedEmpiricalMeasure::add_observable(std::string name, Observable f) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw std::invalid_argument("observable '" + name + "' is already registered");
  }
  if (n_ > 0) throw std::logic_error("observables must be registered before the first record");
  names_.push_back(std::move(name));
  observables_.push_back(std::move(f));
  sums_.emplace_back();
}

void WeightedEmpiricalMeasure::record(ConstVec x, double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("weights must be finite and non-negative");
  if (seen_++ < options_.burn_in) return;
  ++n_;
  h_.add(eta);
  for (std::size_t i = 0; i < observables_.size(); ++i) {
    if (eta != 0.0) sums_[i].add(eta * observables_[i].value(x));
  }
  if (buffer_) buffer_->offer(x, eta);
  if (options_.log_trajectory) {
    log_states_.insert(log_states_.end(), x.begin(), x.end());
    log_weights_.push_back(eta);
  }
}

void WeightedEmpiricalMeasure::observe(std::uint64_t, ConstVec x, double, double eta) { record(x, eta); }

double WeightedEmpiricalMeasure::value(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::invalid_argument("unknown observable '" + std::string(name) + "'");
  if (n_ == 0) throw Error("the measure is empty");
  const double h = h_.value();
  if (h <= 0.0) throw Error("all recorded weights are zero");
  return sums_[static_cast<std::size_t>(it - names_.begin())].value() / h;
}

void WeightedEmpiricalMeasure::reset() {
  for (auto& s : sums_) s = CompensatedSum{};
  h_ = CompensatedSum{};
  n_ = 0;
  seen_ = 0;
  if (buffer_) buffer_.emplace(dim_, options_.buffer_capacity);
  log_states_.clear();
  log_weights_.clear();
}

void WeightedEmpiricalMeasure::write_snapshot_csv(std::ostream& out) const {
  out << "name,value,H_n,n\n";
  for (const auto& name : names_) {
    out << name << ',' << format_double(value(name)) << ',' << format_double(h_.value()) << ',' << n_ << '\n';
  }
}

void WeightedEmpiricalMeasure::write_buffer_csv(std::ostream& out) const {
  for (std::size_t i = 0; i < dim_; ++i) out << "state_" << i << ',';
  out << "weight\n";
  if (!buffer_) return;
  for (std::size_t a = 0; a < buffer_->size(); ++a) {
    for (double v : buffer_->state(a)) out << format_double(v) << ',';
    out << format_double(buffer_->weight(a)) << '\n';
  }
}

AnalyticLaw1D normal_law(double mean, double stddev) {
  if (!(stddev > 0.0)) throw std::invalid_argument("normal law needs a positive standard deviation");
  const boost::math::normal_distribution<double> law(mean, stddev);
  const boost::math::normal_distribution<double> unit;
  AnalyticLaw1D out;
  out.cdf = [law](double x) { return boost::math::cdf(law, x); };
  out.quantile = [law](double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    return boost::math::quantile(law, p);
  };
  out.cdf_integral = [mean, stddev, unit](double x) {
    const double z = (x - mean) / stddev;
    return stddev * (z * boost::math::cdf(unit, z) + boost::math::pdf(unit, z));
  };
  out.moments = {mean, stddev * stddev + mean * mean};
  return out;
}

AnalyticLaw1D tabulated_law(const std::function<double(double)>& density, double lo, double hi, std::size_t points) {
  if (!(hi > lo) || points < 3) throw std::invalid_argument("tabulated law needs hi > lo and at least 3 points");
  auto grid = std::make_shared<std::vector<double>>(points);
  auto cdf = std::make_shared<std::vector<double>>(points, 0.0);
  auto integral = std::make_shared<std::vector<double>>(points, 0.0);
  const double h = (hi - lo) / static_cast<double>(points - 1);
  std::vector<double> p(points);
  for (std::size_t i = 0; i < points; ++i) {
    (*grid)[i] = lo + h * static_cast<double>(i);
    p[i] = density((*grid)[i]);
  }
  for (std::size_t i = 1; i < points; ++i) (*cdf)[i] = (*cdf)[i - 1] + 0.5 * h * (p[i - 1] + p[i]);
  const double total = cdf->back();
  for (double& c : *cdf) c /= total;
  for (std::size_t i = 1; i < points; ++i) (*integral)[i] = (*integral)[i - 1] + 0.5 * h * ((*cdf)[i - 1] + (*cdf)[i]);

  auto locate = [grid, h, lo, points](double x) {
    const auto i = static_cast<std::size_t>(std::clamp((x - lo) / h, 0.0, static_cast<double>(points - 2)));
    return i;
  };
  AnalyticLaw1D out;
  out.cdf = [=](double x) {
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    const std::size_t i = locate(x);
    const double t = (x - (*grid)[i]) / h;
    return (*cdf)[i] + t * ((*cdf)[i + 1] - (*cdf)[i]);
  };
  out.quantile = [=](double q) {
    if (q <= 0.0) return lo;
    if (q >= 1.0) return hi;
    const auto it = std::lower_bound(cdf->begin(), cdf->end(), q);
    const std::size_t j = static_cast<std::size_t>(it - cdf->begin());
    if (j == 0) return lo;
    const double c0 = (*cdf)[j - 1];
    const double c1 = (*cdf)[j];
    return (*grid)[j - 1] + h * (q - c0) / (c1 - c0);
  };
  out.cdf_integral = [=](double x) {
    if (x <= lo) return 0.0;
    if (x >= hi) return integral->back() + (x - hi);
    const std::size_t i = locate(x);
    const double t = (x - (*grid)[i]) / h;
    const double c0 = (*cdf)[i];
    const double c1 = (*cdf)[i + 1];
    return (*integral)[i] + h * (c0 * t + 0.5 * (c1 - c0) * t * t);
  };
  return out;
}

namespace {

double integrate_cdf(const AnalyticLaw1D& law, double a, double b) {
  if (b <= a) return 0.0;
  if (law.cdf_integral) return law.cdf_integral(b) - law.cdf_integral(a);
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(law.cdf, a, b, 15, 1e-12);
}

// Integral over [a, b] of |c - F(x)|.
double gap_integral(const AnalyticLaw1D& law, double c, double a, double b) {
  if (b <= a) return 0.0;
  if (c <= 0.0) return integrate_cdf(law, a, b);
  if (c >= 1.0) return (b - a) - integrate_cdf(law, a, b);
  const double split = std::clamp(law.quantile(c), a, b);
  const double below = c * (split - a) - integrate_cdf(law, a, split);
  const double above = integrate_cdf(law, split, b) - c * (b - split);
  return std::max(0.0, below) + std::max(0.0, above);
}

std::vector<WeightedAtom> normalized_sorted(std::span<const WeightedAtom> atoms) {
  std::vector<WeightedAtom> out(atoms.begin(), atoms.end());
  double total = 0.0;
  for (const auto& a : out) {
    if (!(a.weight >= 0.0)) throw std::invalid_argument("atom weights must be non-negative");
    total += a.weight;
  }
  if (out.empty() || !(total > 0.0)) throw std::invalid_argument("W1 needs atoms with positive total weight");
  for (auto& a : out) a.weight /= total;
  std::sort(out.begin(), out.end(), [](const WeightedAtom& l, const WeightedAtom& r) { return l.x < r.x; });
  return out;
}

}  // namespace

double wasserstein1(std::span<const WeightedAtom> atoms, const AnalyticLaw1D& law) {
  const auto sorted = normalized_sorted(atoms);
  const double lo = std::min(sorted.front().x, law.quantile(kTailProbability));
  const double hi = std::max(sorted.back().x, law.quantile(1.0 - kTailProbability));
  CompensatedSum total;
  total.add(gap_integral(law, 0.0, lo, sorted.front().x));
  CompensatedSum cumulative;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    cumulative.add(sorted[i].weight);
    total.add(gap_integral(law, std::min(1.0, cumulative.value()), sorted[i].x, sorted[i + 1].x));
  }
  total.add(gap_integral(law, 1.0, sorted.back().x, hi));
  return total.value();
}

double wasserstein1(std::span<const WeightedAtom> a, std::span<const WeightedAtom> b) {
  const auto left = normalized_sorted(a);
  const auto right = normalized_sorted(b);
  std::size_t i = 0, j = 0;
  CompensatedSum fa, fb, total;
  double position = std::min(left.front().x, right.front().x);
  while (i < left.size() || j < right.size()) {
    const double next = j == right.size() || (i < left.size() && left[i].x <= right[j].x) ? left[i].x : right[j].x;
    total.add(std::abs(fa.value() - fb.value()) * (next - position));
    position = next;
    while (i < left.size() && left[i].x == next) fa.add(left[i++].weight);
    while (j < right.size() && right[j].x == next) fb.add(right[j++].weight);
  }
  return total.value();
}

double wasserstein1_to(const WeightedEmpiricalMeasure& measure, const AnalyticLaw1D& law) {
  if (measure.dim() != 1) throw UnsupportedError("Wasserstein distance is implemented for d = 1 only");
  if (!measure.buffer() || measure.buffer()->size() == 0) {
    throw Error("Wasserstein distance needs a non-empty sample buffer");
  }
  const auto atoms = measure.buffer()->atoms();
  return wasserstein1(atoms, law);
}

SummaryStats merge_statistics(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("merge_statistics needs at least two values");
  SummaryStats s;
  s.count = values.size();
  const double n = static_cast<double>(values.size());
  CompensatedSum sum;
  for (double v : values) sum.add(v);
  s.mean = sum.value() / n;
  CompensatedSum m2, m3, m4;
  for (double v : values) {
    const double d = v - s.mean;
    m2.add(d * d);
    m3.add(d * d * d);
    m4.add(d * d * d * d);
  }
  const double c2 = m2.value() / n;
  s.variance = m2.value() / (n - 1.0);
  if (c2 > 0.0) {
    s.skewness = (m3.value() / n) / std::pow(c2, 1.5);
    s.excess_kurtosis = (m4.value() / n) / (c2 * c2) - 3.0;
  }
  s.se_mean = std::sqrt(s.variance / n);
  s.se_variance = s.variance * std::sqrt(2.0 / (n - 1.0));
  s.se_skewness = std::sqrt(6.0 / n);
  s.se_kurtosis = std::sqrt(24.0 / n);
  return s;
}

}  // namespace ergodic
