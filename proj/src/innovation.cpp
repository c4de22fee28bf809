#include "ergodic/innovation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <limits>

#include "ergodic/compensated_sum.hpp"
#include "ergodic/errors.hpp"

namespace ergodic {

namespace {

const double kSqrt3 = std::sqrt(3.0);

double draw_coordinate(InnovationKind kind, RandomStream& rng) {
  switch (kind) {
    case InnovationKind::gaussian:
      return rng.normal();
    case InnovationKind::rademacher:
      return rng.bit() ? 1.0 : -1.0;
    case InnovationKind::three_point: {
      const auto bucket = static_cast<int>(rng.uniform() * 6.0);
      if (bucket == 0) return -kSqrt3;
      if (bucket == 1) return kSqrt3;
      return 0.0;
    }
  }
  return 0.0;
}

std::uint64_t saturating_pow(std::uint64_t base, std::uint64_t exponent) {
  std::uint64_t result = 1;
  for (std::uint64_t i = 0; i < exponent; ++i) {
    if (result > std::numeric_limits<std::uint64_t>::max() / base) return std::numeric_limits<std::uint64_t>::max();
    result *= base;
  }
  return result;
}

}  // namespace

int InnovationDist::matching_order() const noexcept {
  switch (kind) {
    case InnovationKind::gaussian:
      return std::numeric_limits<int>::max();
    case InnovationKind::rademacher:
      return 3;
    case InnovationKind::three_point:
      return 5;
  }
  return 0;
}

std::string to_string(InnovationKind kind) {
  switch (kind) {
    case InnovationKind::gaussian:
      return "gaussian";
    case InnovationKind::rademacher:
      return "rademacher";
    case InnovationKind::three_point:
      return "three_point";
  }
  return "?";
}

InnovationKind parse_innovation_kind(const std::string& text) {
  if (text == "gaussian") return InnovationKind::gaussian;
  if (text == "rademacher") return InnovationKind::rademacher;
  if (text == "three_point") return InnovationKind::three_point;
  throw ConfigError("unknown innovation '" + text + "' (expected gaussian, rademacher or three_point)");
}

void sample_innovation(const InnovationDist& dist, RandomStream& rng, std::span<double> out) {
  for (std::size_t i = 0; i < dist.dimension; ++i) out[i] = draw_coordinate(dist.kind, rng);
}

std::vector<double> sample_innovation(const InnovationDist& dist, RandomStream& rng) {
  std::vector<double> u(dist.dimension);
  sample_innovation(dist, rng, u);
  return u;
}

double standard_normal_moment(int k) {
  if (k < 0) throw std::invalid_argument("moment order must be non-negative");
  if (k % 2 != 0) return 0.0;
  double m = 1.0;
  for (int j = k - 1; j > 1; j -= 2) m *= j;
  return m;
}

double coordinate_moment(InnovationKind kind, int k) {
  if (k < 0) throw std::invalid_argument("moment order must be non-negative");
  if (k == 0) return 1.0;
  if (k % 2 != 0) return 0.0;
  switch (kind) {
    case InnovationKind::gaussian:
      return standard_normal_moment(k);
    case InnovationKind::rademacher:
      return 1.0;
    case InnovationKind::three_point:
      // (1/3) * 3^{k/2}
      return std::pow(3.0, k / 2 - 1);
  }
  return 0.0;
}

DiscreteLaw coordinate_law(InnovationKind kind) {
  switch (kind) {
    case InnovationKind::rademacher:
      return {{-1.0, 1.0}, {0.5, 0.5}};
    case InnovationKind::three_point:
      return {{-kSqrt3, 0.0, kSqrt3}, {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0}};
    case InnovationKind::gaussian:
      break;
  }
  throw UnsupportedError("the gaussian innovation has no finite support");
}

LevyAreaSurrogate LevyAreaSurrogate::assemble(std::span<const double> u, std::span<const double> kappa_upper) {
  const std::size_t n = u.size();
  if (kappa_upper.size() != n * (n - 1) / 2) {
    throw std::invalid_argument("kappa must hold N(N-1)/2 entries");
  }
  LevyAreaSurrogate s;
  s.n = n;
  s.w.assign(n * n, 0.0);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s.w[i * n + i] = u[i] * u[i] - 1.0;
    for (std::size_t j = i + 1; j < n; ++j, ++k) {
      const double v = u[i] * u[j] - kappa_upper[k];
      s.w[i * n + j] = v;
      s.w[j * n + i] = v;
    }
  }
  return s;
}

LevyAreaSurrogate sample_levy_surrogate(std::span<const double> u, RandomStream& rng) {
  LevyAreaSurrogate s;
  sample_levy_surrogate(u, rng, s);
  return s;
}

void sample_levy_surrogate(std::span<const double> u, RandomStream& rng, LevyAreaSurrogate& out) {
  const std::size_t n = u.size();
  out.n = n;
  out.w.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) out.w[i * n + i] = u[i] * u[i] - 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double kappa = rng.bit() ? 0.5 : -0.5;
      out.w[i * n + j] = out.w[j * n + i] = u[i] * u[j] - kappa;
    }
  }
}

std::uint64_t outcome_count(const InnovationDist& dist, bool with_kappa) {
  if (!dist.finite_support()) return 0;
  const std::uint64_t per_coordinate = dist.kind == InnovationKind::three_point ? 3 : 2;
  std::uint64_t count = saturating_pow(per_coordinate, dist.dimension);
  if (with_kappa) {
    const std::uint64_t pairs = dist.dimension * (dist.dimension - 1) / 2;
    const std::uint64_t kappa_count = saturating_pow(2, pairs);
    if (kappa_count != 0 && count > std::numeric_limits<std::uint64_t>::max() / kappa_count) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    count *= kappa_count;
  }
  return count;
}

void for_each_outcome(const InnovationDist& dist, bool with_kappa, const OutcomeVisitor& visit) {
  if (!dist.finite_support()) throw UnsupportedError("enumeration requires a finitely supported innovation");
  const std::uint64_t total = outcome_count(dist, with_kappa);
  if (total > kMaxEnumeratedOutcomes) {
    throw UnsupportedError("enumeration needs " + std::to_string(total) + " outcomes, above the cap of " +
                           std::to_string(kMaxEnumeratedOutcomes));
  }
  const DiscreteLaw law = coordinate_law(dist.kind);
  const std::size_t n = dist.dimension;
  const std::size_t levels = law.values.size();
  const std::size_t pairs = with_kappa ? n * (n - 1) / 2 : 0;

  std::vector<std::size_t> digits(n, 0);
  std::vector<double> u(n);
  std::vector<double> kappa(pairs);
  LevyAreaSurrogate empty;
  while (true) {
    double pu = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = law.values[digits[i]];
      pu *= law.probabilities[digits[i]];
    }
    if (with_kappa) {
      const std::uint64_t kappa_outcomes = std::uint64_t{1} << pairs;
      const double pk = 1.0 / static_cast<double>(kappa_outcomes);
      for (std::uint64_t mask = 0; mask < kappa_outcomes; ++mask) {
        for (std::size_t p = 0; p < pairs; ++p) kappa[p] = (mask >> p) & 1u ? 0.5 : -0.5;
        visit(pu * pk, u, LevyAreaSurrogate::assemble(u, kappa));
      }
    } else {
      visit(pu, u, empty);
    }
    std::size_t i = 0;
    while (i < n && ++digits[i] == levels) digits[i++] = 0;
    if (i == n) break;
  }
}

Estimate expectation(const InnovationDist& dist, bool with_kappa, const Quadrature& quadrature,
                     const Integrand& integrand) {
  if (std::holds_alternative<Enumerate>(quadrature)) {
    CompensatedSum mass;
    CompensatedSum total;
    for_each_outcome(dist, with_kappa, [&](double p, std::span<const double> u, const LevyAreaSurrogate& w) {
      mass.add(p);
      total.add(p * integrand(u, w));
    });
    if (std::abs(mass.value() - 1.0) > 1e-14) {
      throw Error("enumerated outcome probabilities sum to " + std::to_string(mass.value()));
    }
    return {total.value(), 0.0};
  }

  const auto& mc = std::get<MonteCarlo>(quadrature);
  if (mc.samples == 0) throw std::invalid_argument("Monte Carlo quadrature needs at least one sample");
  RandomStream rng(mc.seed, 0);
  std::vector<double> u(dist.dimension);
  LevyAreaSurrogate empty;
  CompensatedSum sum;
  CompensatedSum sum_sq;
  for (std::size_t s = 0; s < mc.samples; ++s) {
    sample_innovation(dist, rng, u);
    double g;
    if (with_kappa) {
      g = integrand(u, sample_levy_surrogate(u, rng));
    } else {
      g = integrand(u, empty);
    }
    sum.add(g);
    sum_sq.add(g * g);
  }
  const double m = static_cast<double>(mc.samples);
  const double mean = sum.value() / m;
  double variance = 0.0;
  if (mc.samples > 1) variance = std::max(0.0, (sum_sq.value() - m * mean * mean) / (m - 1.0));
  return {mean, std::sqrt(variance / m)};
}

}  // namespace ergodic
