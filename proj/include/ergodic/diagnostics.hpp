#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ergodic/innovation.hpp"
#include "ergodic/model.hpp"
#include "ergodic/schemes.hpp"

namespace ergodic {

enum class Verdict { pass, fail, inconclusive };
std::string to_string(Verdict verdict);

/// Tensor grid over [-5, 5]^d with 21 points per axis for d <= 2, otherwise a
/// fixed-seed cloud of 200 uniform points in the same box.
std::vector<Vector> default_grid(std::size_t dim);

/// Slack allowed below zero: max(1e-8, 0.02 |rhs|).
double probe_tolerance(double rhs);

struct ProbeReport {
  std::vector<Vector> grid;
  /// RHS(x) - A~_gamma(psi_p o V)(x) per grid point.
  std::vector<double> margins;
  std::vector<double> std_errors;  // zero under enumeration
  std::vector<double> rhs;
  Verdict verdict = Verdict::pass;
  std::size_t worst_index = 0;
  Vector worst_point;
  double worst_margin = 0.0;

  double gamma = 0.0;
  Scheme scheme = Scheme::euler;
  InnovationDist innovation{};
  double alpha = 0.0;
  double alpha_tilde = 0.0;
  double beta = 0.0;
  double p = 1.0;
  double a = 1.0;

  /// Continuous-time mean reversion beta - alpha phi(V) - <grad V, b> - chi_p / 2 per point.
  std::vector<double> mean_reverting_margins;
  /// ||lambda_p||_inf approximated by the maximum over the grid.
  double lambda_p_grid_max = 0.0;
  std::vector<std::string> notes;
};

struct RecursiveControlOptions {
  InnovationDist innovation{};
  Quadrature quadrature = Enumerate{};
  /// Constant in the discrete-time bound; defaults to alpha.
  std::optional<double> alpha_tilde;
};

/// Checks A~_gamma(psi_p o V)(x) <= (psi_p o V / V)(x) p (beta - alpha~ phi o V(x)) on the grid,
/// with A~_gamma g(x) = (E[g(X_gamma) | X_0 = x] - g(x)) / gamma.
/// Pass iff every margin >= -probe_tolerance(rhs). Under Monte Carlo, points whose
/// standard error of A~_gamma exceeds 10% of |rhs| are inconclusive; a report with
/// no failing point but an inconclusive one is inconclusive.
ProbeReport recursive_control_probe(Scheme scheme, const DiffusionModel& model, const LyapunovSpec& lyapunov,
                                    double gamma, std::span<const Vector> grid,
                                    const RecursiveControlOptions& options = {});

/// V(x) = 1 + |x|^2 with the given constants (psi_p(y) = y^p, phi(y) = y^a).
LyapunovSpec quadratic_lyapunov(std::size_t dim, double alpha, double beta, double p = 1.0, double a = 1.0);

/// Recursive-control verdicts over a list of steps.
struct StepSweep {
  std::vector<double> gammas;
  std::vector<Verdict> verdicts;
  /// Largest probed gamma such that every probed gamma up to it passes.
  std::optional<double> holds_up_to;
};
StepSweep recursive_control_sweep(Scheme scheme, const DiffusionModel& model, const LyapunovSpec& lyapunov,
                                  std::span<const double> gammas, std::span<const Vector> grid,
                                  const RecursiveControlOptions& options = {});

struct MomentDeviation {
  std::vector<int> index;  // exponent of each coordinate
  int order = 0;
  double moment = 0.0;     // E[prod U_i^{index_i}]
  double gaussian = 0.0;   // same for a standard normal vector
  double deviation = 0.0;  // moment - gaussian
};

struct MomentMatchReport {
  InnovationDist innovation{};
  int up_to = 0;
  std::vector<MomentDeviation> entries;
  /// Largest q' <= up_to with every deviation of order <= q' equal to zero.
  int matched_order = 0;
};

/// Mixed moments of every order 1..q against the standard normal tensor moments.
MomentMatchReport moment_match_report(const InnovationDist& innovation, int q);

struct WeakOrderPoint {
  double gamma = 0.0;
  double expectation = 0.0;  // E[f(X_gamma) | X_0 = x], exact
  double target = 0.0;       // f + gamma Af (+ gamma^2/2 A^2 f for Talay)
  double error = 0.0;
};

struct WeakOrderReport {
  Scheme scheme = Scheme::euler;
  std::vector<WeakOrderPoint> points;
  /// error(gamma_i) / error(gamma_{i+1}); NaN when both errors vanish.
  std::vector<double> ratios;
};

/// One-step weak error against the generator Taylor expansion, by exhaustive
/// enumeration over (U, kappa).
WeakOrderReport weak_order_probe(Scheme scheme, const DiffusionModel& model, const Observable& f, ConstVec x,
                                 std::span<const double> gammas, const InnovationDist& innovation);

nlohmann::json to_json(const ProbeReport& report);
nlohmann::json to_json(const MomentMatchReport& report);
nlohmann::json to_json(const WeakOrderReport& report);

}  // namespace ergodic
