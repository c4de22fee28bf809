#include "ergodic/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ergodic/errors.hpp"

namespace ergodic {

std::string to_string(Scheme scheme) { return scheme == Scheme::euler ? "euler" : "talay2"; }

Scheme parse_scheme(const std::string& text) {
  if (text == "euler") return Scheme::euler;
  if (text == "talay2" || text == "talay") return Scheme::talay2;
  throw ConfigError("unknown scheme '" + text + "' (expected euler or talay2)");
}

int weak_order(Scheme scheme) { return scheme == Scheme::euler ? 1 : 2; }

Stepper::Stepper(Scheme scheme, const DiffusionModel& model)
    : scheme_(scheme),
      model_(&model),
      d_(model.dim),
      n_(model.noise_dim),
      b_(d_),
      sigma_(d_ * n_),
      col_(d_),
      jet_(d_),
      jet_matrix_(d_ * n_),
      coeff_(d_ * n_),
      ab_(d_),
      cols_(n_, Vector(d_)) {}

void Stepper::step(MutVec x, double gamma, ConstVec u, const LevyAreaSurrogate& w, std::uint64_t step_index,
                   TalayIncrements* increments) {
  if (!(gamma > 0.0)) throw std::invalid_argument("step size must be positive");
  if (scheme_ == Scheme::euler) {
    euler(x, gamma, u);
  } else {
    talay(x, gamma, u, w, increments);
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw DivergenceError(step_index, "non-finite state");
    if (std::abs(v) > kDivergenceBound) throw DivergenceError(step_index, "state left the ball of radius 1e12");
  }
}

void Stepper::euler(MutVec x, double gamma, ConstVec u) {
  model_->drift(x, b_);
  model_->diffusion(x, sigma_);
  const double root = std::sqrt(gamma);
  for (std::size_t l = 0; l < d_; ++l) {
    double noise = 0.0;
    for (std::size_t i = 0; i < n_; ++i) noise += sigma_[l * n_ + i] * u[i];
    x[l] += gamma * b_[l] + root * noise;
  }
}

void Stepper::talay(MutVec x, double gamma, ConstVec u, const LevyAreaSurrogate& w, TalayIncrements* increments) {
  if (w.n != n_) throw std::invalid_argument("Talay step needs an N x N surrogate W");
  const DiffusionModel& model = *model_;
  model.drift(x, b_);
  model.diffusion(x, sigma_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t l = 0; l < d_; ++l) cols_[i][l] = sigma_[l * n_ + i];

  const double root = std::sqrt(gamma);
  const double g32 = gamma * root;
  const double g2 = gamma * gamma;

  // Delta^3 = g/2 sum_{i,j} W(i,j) L^j sigma_i, accumulated into col_.
  std::fill(col_.begin(), col_.end(), 0.0);
  for (std::size_t j = 0; j < n_; ++j) {
    bool any = false;
    for (std::size_t i = 0; i < n_; ++i) any = any || w(i, j) != 0.0;
    if (!any) continue;
    const std::array<ConstVec, 1> dirs{cols_[j]};
    diffusion_derivative(model, x, dirs, jet_matrix_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t l = 0; l < d_; ++l) col_[l] += w(i, j) * jet_matrix_[l * n_ + i];
  }

  // c_i = 1/2 [ (Db; sigma_i) + (D sigma_i; b) + 1/2 sum_k (D^2 sigma_i; sigma_k, sigma_k) ]
  {
    const std::array<ConstVec, 1> dirs{b_};
    diffusion_derivative(model, x, dirs, coeff_);
  }
  for (std::size_t k = 0; k < n_; ++k) {
    const std::array<ConstVec, 2> dirs{cols_[k], cols_[k]};
    diffusion_derivative(model, x, dirs, jet_matrix_);
    for (std::size_t e = 0; e < d_ * n_; ++e) coeff_[e] += 0.5 * jet_matrix_[e];
  }
  for (std::size_t i = 0; i < n_; ++i) {
    const std::array<ConstVec, 1> dirs{cols_[i]};
    drift_derivative(model, x, dirs, jet_);
    for (std::size_t l = 0; l < d_; ++l) coeff_[l * n_ + i] = 0.5 * (coeff_[l * n_ + i] + jet_[l]);
  }

  // Ab = (Db; b) + 1/2 sum_k (D^2 b; sigma_k, sigma_k)
  {
    const std::array<ConstVec, 1> dirs{b_};
    drift_derivative(model, x, dirs, ab_);
  }
  for (std::size_t k = 0; k < n_; ++k) {
    const std::array<ConstVec, 2> dirs{cols_[k], cols_[k]};
    drift_derivative(model, x, dirs, jet_);
    for (std::size_t l = 0; l < d_; ++l) ab_[l] += 0.5 * jet_[l];
  }

  if (increments != nullptr) {
    for (auto& inc : *increments) inc.assign(d_, 0.0);
  }
  for (std::size_t l = 0; l < d_; ++l) {
    double noise = 0.0;
    double corrected = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      noise += sigma_[l * n_ + i] * u[i];
      corrected += coeff_[l * n_ + i] * u[i];
    }
    const double d1 = root * noise;
    const double d2 = gamma * b_[l];
    const double d3 = 0.5 * gamma * col_[l];
    const double d4 = g32 * corrected;
    const double d5 = 0.5 * g2 * ab_[l];
    if (increments != nullptr) {
      (*increments)[0][l] = d1;
      (*increments)[1][l] = d2;
      (*increments)[2][l] = d3;
      (*increments)[3][l] = d4;
      (*increments)[4][l] = d5;
    }
    x[l] += d1 + d2 + d3 + d4 + d5;
  }
}

Vector euler_step(const DiffusionModel& model, ConstVec x, double gamma, ConstVec u) {
  Stepper stepper(Scheme::euler, model);
  Vector next(x.begin(), x.end());
  stepper.step(next, gamma, u, LevyAreaSurrogate{}, 1);
  return next;
}

Vector talay_step(const DiffusionModel& model, ConstVec x, double gamma, ConstVec u, const LevyAreaSurrogate& w,
                  TalayIncrements* increments) {
  Stepper stepper(Scheme::talay2, model);
  Vector next(x.begin(), x.end());
  stepper.step(next, gamma, u, w, 1, increments);
  return next;
}

Vector talay_noise_coefficient(const DiffusionModel& model, ConstVec x) {
  // Recover c(x) column by column from the gamma^{3/2} increment with unit u and gamma = 1.
  const std::size_t n = model.noise_dim;
  const std::size_t d = model.dim;
  Vector result(d * n);
  Stepper stepper(Scheme::talay2, model);
  LevyAreaSurrogate zero;
  zero.n = n;
  zero.w.assign(n * n, 0.0);
  TalayIncrements increments;
  for (std::size_t i = 0; i < n; ++i) {
    Vector u(n, 0.0);
    u[i] = 1.0;
    Vector scratch(x.begin(), x.end());
    stepper.step(scratch, 1.0, u, zero, 0, &increments);
    for (std::size_t l = 0; l < d; ++l) result[l * n + i] = increments[3][l];
  }
  return result;
}

SchemeState simulate(const ChainSpec& chain, const DiffusionModel& model, const WeightSchedule& weights,
                     std::uint64_t n_steps, ConstVec x0, RandomStream& rng, std::span<StateSink* const> sinks) {
  if (x0.size() != model.dim) throw std::invalid_argument("initial state has the wrong dimension");
  if (chain.innovation.dimension != model.noise_dim) {
    throw std::invalid_argument("innovation dimension does not match the model's noise dimension");
  }
  SchemeState state;
  state.x.assign(x0.begin(), x0.end());
  state.master_seed = rng.master_seed();
  state.stream_index = rng.stream_index();

  Stepper stepper(chain.scheme, model);
  const StepSchedule& steps = weights.steps();
  const bool talay = chain.scheme == Scheme::talay2;
  std::vector<double> u(model.noise_dim);
  LevyAreaSurrogate w;
  for (std::uint64_t k = 1; k <= n_steps; ++k) {
    const double gamma = steps.gamma(k);
    const double eta = weights.eta(k);
    for (StateSink* sink : sinks) sink->observe(k, state.x, gamma, eta);
    sample_innovation(chain.innovation, rng, u);
    if (talay) sample_levy_surrogate(u, rng, w);
    stepper.step(state.x, gamma, u, w, k);
    state.n = k;
    state.gamma_n = gamma;
  }
  return state;
}

}  // namespace ergodic
