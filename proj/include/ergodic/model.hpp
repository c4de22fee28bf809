#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ergodic/innovation.hpp"

namespace ergodic {

using Vector = std::vector<double>;
using ConstVec = std::span<const double>;
using MutVec = std::span<double>;
/// Direction arguments of a multilinear derivative, (D^k g(x); v_1, ..., v_k).
using Directions = std::span<const ConstVec>;

enum class DerivativeFallback { analytic, central_finite_difference };

/// dX = b(X) dt + sigma(X) dW in R^d driven by an N-dimensional Brownian motion.
///
/// sigma is stored row-major: entry (l, i) at l * N + i, column i is sigma_i.
/// Derivatives are supplied as jets: drift_jet(x, {v_1..v_k}, out) writes
/// (D^k b(x); v_1, ..., v_k) in R^d and diffusion_jet does the same for sigma
/// (a d x N matrix). Orders above the declared jet order are unavailable; when
/// a jet is missing and `fallback` is central_finite_difference, orders 1 and
/// 2 are approximated by central differences.
struct DiffusionModel {
  using Field = std::function<void(ConstVec x, MutVec out)>;
  using Jet = std::function<void(ConstVec x, Directions dirs, MutVec out)>;

  std::size_t dim = 1;
  std::size_t noise_dim = 1;
  Field drift;
  Field diffusion;
  Jet drift_jet;
  int drift_jet_order = 0;
  Jet diffusion_jet;
  int diffusion_jet_order = 0;
  DerivativeFallback fallback = DerivativeFallback::analytic;

  Vector b(ConstVec x) const;
  Vector sigma(ConstVec x) const;
};

/// (D^k b(x); dirs) with k = dirs.size(), k = 0 giving b(x).
void drift_derivative(const DiffusionModel& model, ConstVec x, Directions dirs, MutVec out);
/// (D^k sigma(x); dirs) as a row-major d x N matrix.
void diffusion_derivative(const DiffusionModel& model, ConstVec x, Directions dirs, MutVec out);
/// Highest derivative order of b (resp. sigma) available analytically or by fallback.
int drift_order(const DiffusionModel& model);
int diffusion_order(const DiffusionModel& model);

/// A test function f with symmetric multilinear derivatives up to `max_order` (<= 6).
struct Observable {
  std::function<double(ConstVec x)> value;
  /// (D^k f(x); v_1, ..., v_k) with k = dirs.size() >= 1.
  std::function<double(ConstVec x, Directions dirs)> derivative;
  int max_order = 0;
};

/// (D^k f(x); dirs); k = 0 evaluates f. Throws InsufficientOrderError above max_order.
double directional(const Observable& f, ConstVec x, Directions dirs);

/// a f + b g.
Observable linear_combination(double a, const Observable& f, double b, const Observable& g);

struct LyapunovSpec {
  std::function<double(ConstVec x)> v;
  std::function<void(ConstVec x, MutVec out)> grad_v;
  std::function<void(ConstVec x, MutVec out)> hess_v;  // row-major d x d
  double v_star = 1.0;
  double p = 1.0;      // psi_p(y) = y^p
  double a = 1.0;      // phi(y) = y^a
  double alpha = 1.0;
  double beta = 0.0;
};

/// Af(x) = <b, grad f> + 1/2 sum_ij (sigma sigma^*)_ij d_ij f.
double generator_apply(const DiffusionModel& model, const Observable& f, ConstVec x);

/// |sigma(x)^* grad f(x)|^2.
double vf_operator(const DiffusionModel& model, const Observable& f, ConstVec x);

/// sigma~_i = sum_l ( d_l b sigma_{l,i} + d_l sigma_i b_l + sum_j (sigma sigma^*)_{l,j} d_lj sigma_i ),
/// returned row-major d x N. The field as displayed in the Talay construction;
/// the weak-order-2 stepper uses its own coefficient, see talay_noise_coefficient.
Vector sigma_tilde(const DiffusionModel& model, ConstVec x);

/// Ab(x), componentwise (Ab)_k = <b, grad b_k> + 1/2 sum (sigma sigma^*)_ij d_ij b_k.
Vector drift_generator(const DiffusionModel& model, ConstVec x);

/// Af as an observable. Its value needs only f up to order 2; derivative order
/// k needs analytic jets of b and sigma up to order k (finite differences of
/// finite differences are refused).
Observable generator_observable(const DiffusionModel& model, const Observable& f);

/// Correction operator of the Euler scheme:
///   -1/2 (D^2 f; b^2) - E[ 1/2 (D^3 f; (sigma U)^2 b) + 1/4! (D^4 f; (sigma U)^4) ].
Estimate m1_euler(const DiffusionModel& model, const Observable& f, ConstVec x, const InnovationDist& innovation,
                  const Quadrature& quadrature);

/// First correction operator of the Talay construction, expectation over (U, kappa).
Estimate m1_talay(const DiffusionModel& model, const Observable& f, ConstVec x, const InnovationDist& innovation,
                  const Quadrature& quadrature);

/// The part of the second correction operator that does not go through Af.
Estimate m2_tilde_talay(const DiffusionModel& model, const Observable& f, ConstVec x,
                        const InnovationDist& innovation, const Quadrature& quadrature);

/// M_2 f = M_1(Af) + M~_2 f, with Af supplied (order >= 4).
Estimate m2_talay(const DiffusionModel& model, const Observable& f, const Observable& af, ConstVec x,
                  const InnovationDist& innovation, const Quadrature& quadrature);
/// As above with Af built by generator_observable.
Estimate m2_talay(const DiffusionModel& model, const Observable& f, ConstVec x, const InnovationDist& innovation,
                  const Quadrature& quadrature);

}  // namespace ergodic
