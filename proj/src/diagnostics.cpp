#include "ergodic/diagnostics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "ergodic/errors.hpp"

namespace ergodic {

namespace {

constexpr double kGridHalfWidth = 5.0;
constexpr std::size_t kGridAxisPoints = 21;
constexpr std::size_t kCloudPoints = 200;
constexpr std::uint64_t kCloudSeed = 0x70726f6265ULL;

nlohmann::json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

// Largest eigenvalue of D^2 V + 2 (p - 1) grad V grad V^* / V, floored at 0.
double lambda_p(const LyapunovSpec& lyapunov, ConstVec x, std::size_t d) {
  Vector grad(d), hess(d * d);
  lyapunov.grad_v(x, grad);
  lyapunov.hess_v(x, hess);
  const double v = lyapunov.v(x);
  const double p = std::max(lyapunov.p, 1.0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          hess[i * d + j] + 2.0 * (p - 1.0) * grad[i] * grad[j] / v;
  m = 0.5 * (m + m.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  return std::max(0.0, solver.eigenvalues().maxCoeff());
}

}  // namespace

std::string to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::pass:
      return "pass";
    case Verdict::fail:
      return "fail";
    case Verdict::inconclusive:
      return "inconclusive";
  }
  return "?";
}

std::vector<Vector> default_grid(std::size_t dim) {
  std::vector<Vector> grid;
  if (dim == 0) throw std::invalid_argument("grid dimension must be positive");
  if (dim <= 2) {
    const double h = 2.0 * kGridHalfWidth / static_cast<double>(kGridAxisPoints - 1);
    std::vector<std::size_t> idx(dim, 0);
    while (true) {
      Vector x(dim);
      for (std::size_t i = 0; i < dim; ++i) x[i] = -kGridHalfWidth + h * static_cast<double>(idx[i]);
      grid.push_back(std::move(x));
      std::size_t i = 0;
      while (i < dim && ++idx[i] == kGridAxisPoints) idx[i++] = 0;
      if (i == dim) break;
    }
    return grid;
  }
  RandomStream rng(kCloudSeed, dim);
  for (std::size_t s = 0; s < kCloudPoints; ++s) {
    Vector x(dim);
    for (auto& e : x) e = -kGridHalfWidth + 2.0 * kGridHalfWidth * rng.uniform();
    grid.push_back(std::move(x));
  }
  return grid;
}

double probe_tolerance(double rhs) { return std::max(1e-8, 0.02 * std::abs(rhs)); }

LyapunovSpec quadratic_lyapunov(std::size_t dim, double alpha, double beta, double p, double a) {
  LyapunovSpec spec;
  spec.v = [](ConstVec x) {
    double s = 1.0;
    for (double e : x) s += e * e;
    return s;
  };
  spec.grad_v = [](ConstVec x, MutVec out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * x[i];
  };
  spec.hess_v = [dim](ConstVec, MutVec out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < dim; ++i) out[i * dim + i] = 2.0;
  };
  spec.v_star = 1.0;
  spec.p = p;
  spec.a = a;
  spec.alpha = alpha;
  spec.beta = beta;
  return spec;
}

ProbeReport recursive_control_probe(Scheme scheme, const DiffusionModel& model, const LyapunovSpec& lyapunov,
                                    double gamma, std::span<const Vector> grid,
                                    const RecursiveControlOptions& options) {
  if (grid.empty()) throw std::invalid_argument("probe grid is empty");
  if (!(gamma > 0.0)) throw std::invalid_argument("probe step must be positive");
  if (options.innovation.dimension != model.noise_dim) {
    throw std::invalid_argument("innovation dimension does not match the model's noise dimension");
  }
  const std::size_t d = model.dim;
  const double p = lyapunov.p;
  const double alpha_tilde = options.alpha_tilde.value_or(lyapunov.alpha);
  const bool talay = scheme == Scheme::talay2;

  ProbeReport report;
  report.gamma = gamma;
  report.scheme = scheme;
  report.innovation = options.innovation;
  report.alpha = lyapunov.alpha;
  report.alpha_tilde = alpha_tilde;
  report.beta = lyapunov.beta;
  report.p = p;
  report.a = lyapunov.a;
  report.grid.assign(grid.begin(), grid.end());

  Stepper stepper(scheme, model);
  Vector next(d);
  bool any_fail = false;
  bool any_inconclusive = false;
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Vector& x = grid[g];
    const double v = lyapunov.v(x);
    if (v < lyapunov.v_star) throw std::invalid_argument("V falls below v_star on the probe grid");
    const double psi = std::pow(v, p);
    const Estimate e = expectation(options.innovation, talay, options.quadrature,
                                   [&](ConstVec u, const LevyAreaSurrogate& w) {
                                     std::copy(x.begin(), x.end(), next.begin());
                                     stepper.step(next, gamma, u, w);
                                     return std::pow(lyapunov.v(next), p);
                                   });
    const double pseudo = (e.value - psi) / gamma;
    const double rhs = psi / v * p * (lyapunov.beta - alpha_tilde * std::pow(v, lyapunov.a));
    const double margin = rhs - pseudo;
    const double se = e.std_error / gamma;
    report.margins.push_back(margin);
    report.std_errors.push_back(se);
    report.rhs.push_back(rhs);
    const bool fails = margin < -probe_tolerance(rhs);
    if (se > 0.1 * std::abs(rhs) && se > 0.0) {
      any_inconclusive = true;
    } else if (fails) {
      any_fail = true;
    }
    if (margin < worst) {
      worst = margin;
      report.worst_index = g;
    }
  }
  report.worst_margin = worst;
  report.worst_point = report.grid[report.worst_index];
  report.verdict = any_fail ? Verdict::fail : any_inconclusive ? Verdict::inconclusive : Verdict::pass;

  // Continuous-time mean reversion with chi_p from the grid maximum of lambda_p.
  if (lyapunov.grad_v && lyapunov.hess_v) {
    double lam = 0.0;
    for (const Vector& x : grid) lam = std::max(lam, lambda_p(lyapunov, x, d));
    report.lambda_p_grid_max = lam;
    const double factor = p > 1.0 ? std::pow(2.0, std::max(0.0, 2.0 * p - 3.0)) : 1.0;
    Vector grad(d), b(d), sigma(d * model.noise_dim);
    for (const Vector& x : grid) {
      lyapunov.grad_v(x, grad);
      model.drift(x, b);
      model.diffusion(x, sigma);
      double drift = 0.0, trace = 0.0;
      for (std::size_t i = 0; i < d; ++i) drift += grad[i] * b[i];
      for (double s : sigma) trace += s * s;
      const double chi = lam * factor * trace;
      report.mean_reverting_margins.push_back(lyapunov.beta - lyapunov.alpha * std::pow(lyapunov.v(x), lyapunov.a) -
                                              drift - 0.5 * chi);
    }
    report.notes.push_back("lambda_p sup is the maximum over the probe grid, not a proven supremum");
  }
  if (std::holds_alternative<MonteCarlo>(options.quadrature)) {
    report.notes.push_back("expectations by Monte Carlo; std_errors are those of the pseudo-generator");
  }
  return report;
}

StepSweep recursive_control_sweep(Scheme scheme, const DiffusionModel& model, const LyapunovSpec& lyapunov,
                                  std::span<const double> gammas, std::span<const Vector> grid,
                                  const RecursiveControlOptions& options) {
  StepSweep sweep;
  sweep.gammas.assign(gammas.begin(), gammas.end());
  std::sort(sweep.gammas.begin(), sweep.gammas.end());
  for (double g : sweep.gammas) {
    sweep.verdicts.push_back(recursive_control_probe(scheme, model, lyapunov, g, grid, options).verdict);
  }
  for (std::size_t i = 0; i < sweep.gammas.size() && sweep.verdicts[i] == Verdict::pass; ++i) {
    sweep.holds_up_to = sweep.gammas[i];
  }
  return sweep;
}

MomentMatchReport moment_match_report(const InnovationDist& innovation, int q) {
  if (q < 1) throw std::invalid_argument("moment order must be at least 1");
  if (q > 6) throw std::invalid_argument("moment order is limited to 6");
  const std::size_t n = innovation.dimension;
  MomentMatchReport report;
  report.innovation = innovation;
  report.up_to = q;
  report.matched_order = q;
  for (int order = 1; order <= q; ++order) {
    // Every exponent vector of total degree `order`, in lexicographic order.
    std::vector<int> index(n, 0);
    index[0] = order;
    while (true) {
      MomentDeviation entry;
      entry.index = index;
      entry.order = order;
      entry.moment = 1.0;
      entry.gaussian = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        entry.moment *= coordinate_moment(innovation.kind, index[i]);
        entry.gaussian *= standard_normal_moment(index[i]);
      }
      entry.deviation = entry.moment - entry.gaussian;
      if (entry.deviation != 0.0) report.matched_order = std::min(report.matched_order, order - 1);
      report.entries.push_back(std::move(entry));
      // Next composition: move one unit from the last non-zero slot before the tail.
      std::size_t last = n;
      for (std::size_t i = 0; i + 1 < n; ++i)
        if (index[i] > 0) last = i;
      if (last == n) break;
      const int tail = index[n - 1];
      index[n - 1] = 0;
      --index[last];
      index[last + 1] = tail + 1;
    }
  }
  return report;
}

WeakOrderReport weak_order_probe(Scheme scheme, const DiffusionModel& model, const Observable& f, ConstVec x,
                                 std::span<const double> gammas, const InnovationDist& innovation) {
  if (!innovation.finite_support()) {
    throw UnsupportedError("the weak-order probe needs a finitely supported innovation");
  }
  if (innovation.dimension != model.noise_dim) {
    throw std::invalid_argument("innovation dimension does not match the model's noise dimension");
  }
  const bool talay = scheme == Scheme::talay2;
  const double fx = f.value(x);
  const double afx = generator_apply(model, f, x);
  double a2fx = 0.0;
  if (talay) {
    const Observable af = generator_observable(model, f);
    if (af.max_order < 2) {
      throw InsufficientOrderError("insufficient observable order: the Talay target needs A^2 f (f of order >= 4)");
    }
    a2fx = generator_apply(model, af, x);
  }
  WeakOrderReport report;
  report.scheme = scheme;
  Stepper stepper(scheme, model);
  Vector next(x.size());
  for (double gamma : gammas) {
    const Estimate e = expectation(innovation, talay, Enumerate{}, [&](ConstVec u, const LevyAreaSurrogate& w) {
      std::copy(x.begin(), x.end(), next.begin());
      stepper.step(next, gamma, u, w);
      return f.value(next);
    });
    WeakOrderPoint point;
    point.gamma = gamma;
    point.expectation = e.value;
    point.target = fx + gamma * afx + (talay ? 0.5 * gamma * gamma * a2fx : 0.0);
    point.error = point.expectation - point.target;
    report.points.push_back(point);
  }
  for (std::size_t i = 0; i + 1 < report.points.size(); ++i) {
    const double num = report.points[i].error;
    const double den = report.points[i + 1].error;
    report.ratios.push_back(num == 0.0 && den == 0.0 ? std::numeric_limits<double>::quiet_NaN() : num / den);
  }
  return report;
}

nlohmann::json to_json(const ProbeReport& report) {
  nlohmann::json j;
  j["grid"] = report.grid;
  j["margins"] = report.margins;
  j["verdict"] = to_string(report.verdict);
  j["worst_point"] = report.worst_point;
  j["worst_margin"] = report.worst_margin;
  j["std_errors"] = report.std_errors;
  j["rhs"] = report.rhs;
  j["mean_reverting_margins"] = report.mean_reverting_margins;
  j["lambda_p_grid_max"] = report.lambda_p_grid_max;
  j["metadata"] = {{"gamma", report.gamma},
                   {"scheme", to_string(report.scheme)},
                   {"innovation", to_string(report.innovation.kind)},
                   {"alpha", report.alpha},
                   {"alpha_tilde", report.alpha_tilde},
                   {"beta", report.beta},
                   {"p", report.p},
                   {"a", report.a}};
  j["notes"] = report.notes;
  return j;
}

nlohmann::json to_json(const MomentMatchReport& report) {
  nlohmann::json j;
  j["innovation"] = to_string(report.innovation.kind);
  j["dimension"] = report.innovation.dimension;
  j["up_to"] = report.up_to;
  j["matched_order"] = report.matched_order;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : report.entries) {
    j["entries"].push_back(
        {{"index", e.index}, {"order", e.order}, {"moment", e.moment}, {"gaussian", e.gaussian}, {"deviation", e.deviation}});
  }
  return j;
}

nlohmann::json to_json(const WeakOrderReport& report) {
  nlohmann::json j;
  j["scheme"] = to_string(report.scheme);
  j["points"] = nlohmann::json::array();
  for (const auto& p : report.points) {
    j["points"].push_back({{"gamma", p.gamma}, {"expectation", p.expectation}, {"target", p.target}, {"error", p.error}});
  }
  j["ratios"] = nlohmann::json::array();
  for (double r : report.ratios) j["ratios"].push_back(number_or_null(r));
  return j;
}

}  // namespace ergodic
