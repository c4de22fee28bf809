#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ergodic/rng.hpp"

namespace ergodic {

enum class InnovationKind { gaussian, rademacher, three_point };

/// Law of the i.i.d. innovations U_n in R^N. Coordinates are independent.
struct InnovationDist {
  InnovationKind kind = InnovationKind::three_point;
  std::size_t dimension = 1;

  bool finite_support() const noexcept { return kind != InnovationKind::gaussian; }
  /// Largest q such that E[U^{(x)k}] equals the standard normal tensor moment for all k <= q.
  int matching_order() const noexcept;
};

std::string to_string(InnovationKind kind);
InnovationKind parse_innovation_kind(const std::string& text);

/// Draws one innovation vector into `out` (size = dist.dimension).
void sample_innovation(const InnovationDist& dist, RandomStream& rng, std::span<double> out);
std::vector<double> sample_innovation(const InnovationDist& dist, RandomStream& rng);

/// E[X^k] of one coordinate.
double coordinate_moment(InnovationKind kind, int k);
/// E[Z^k] for Z standard normal: (k-1)!! for even k, 0 for odd k.
double standard_normal_moment(int k);

/// Support points and probabilities of one coordinate (finite-support laws only).
struct DiscreteLaw {
  std::vector<double> values;
  std::vector<double> probabilities;
};
DiscreteLaw coordinate_law(InnovationKind kind);

/// The discrete surrogate W of the iterated Brownian integrals:
/// W(i,i) = u_i^2 - 1 and W(i,j) = u_i u_j - kappa(min(i,j), max(i,j)).
struct LevyAreaSurrogate {
  std::size_t n = 0;
  std::vector<double> w;  // row-major n x n

  double operator()(std::size_t i, std::size_t j) const { return w[i * n + j]; }

  /// `kappa_upper` lists kappa(i,j) for i < j in row-major order.
  static LevyAreaSurrogate assemble(std::span<const double> u, std::span<const double> kappa_upper);
};

/// Draws kappa(i,j) in {-1/2, +1/2} for i < j (row-major) and assembles W.
LevyAreaSurrogate sample_levy_surrogate(std::span<const double> u, RandomStream& rng);
/// In-place variant reusing the storage of `out`.
void sample_levy_surrogate(std::span<const double> u, RandomStream& rng, LevyAreaSurrogate& out);

struct Enumerate {};
struct MonteCarlo {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};
/// How expectations over (U, kappa) are evaluated.
using Quadrature = std::variant<Enumerate, MonteCarlo>;

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;  // zero for exact enumeration
};

inline constexpr std::uint64_t kMaxEnumeratedOutcomes = 1'000'000;

/// Number of joint outcomes of (U, kappa); 0 when U is not finitely supported.
std::uint64_t outcome_count(const InnovationDist& dist, bool with_kappa);

using OutcomeVisitor = std::function<void(double probability, std::span<const double> u, const LevyAreaSurrogate& w)>;
using Integrand = std::function<double(std::span<const double> u, const LevyAreaSurrogate& w)>;

/// Visits every joint outcome. Without kappa the surrogate passed is empty (n = 0).
/// Throws UnsupportedError for continuous laws or more than kMaxEnumeratedOutcomes outcomes.
void for_each_outcome(const InnovationDist& dist, bool with_kappa, const OutcomeVisitor& visit);

/// E[g(U, W)] by enumeration or Monte Carlo. Enumeration checks that the
/// outcome probabilities sum to one within 1e-14.
Estimate expectation(const InnovationDist& dist, bool with_kappa, const Quadrature& quadrature,
                     const Integrand& integrand);

}  // namespace ergodic
