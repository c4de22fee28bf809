#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ergodic/innovation.hpp"
#include "ergodic/model.hpp"
#include "ergodic/rng.hpp"
#include "ergodic/schedules.hpp"

namespace ergodic {

enum class Scheme { euler, talay2 };

std::string to_string(Scheme scheme);
Scheme parse_scheme(const std::string& text);
/// Weak order of the one-step kernel: 1 for Euler, 2 for Talay.
int weak_order(Scheme scheme);

/// Receives every pre-step state X_{k-1} together with gamma_k and eta_k, k = 1, 2, ...
class StateSink {
 public:
  virtual ~StateSink() = default;
  virtual void observe(std::uint64_t k, ConstVec x, double gamma, double eta) = 0;
};

/// The five increments of a Talay step, in order: sigma noise, drift,
/// iterated-integral term, gamma^{3/2} noise correction, gamma^2 drift correction.
using TalayIncrements = std::array<Vector, 5>;

/// Sup-norm bound beyond which a chain is declared divergent.
inline constexpr double kDivergenceBound = 1e12;

/// One-step kernels with preallocated scratch; one instance per trajectory.
class Stepper {
 public:
  Stepper(Scheme scheme, const DiffusionModel& model);

  Scheme scheme() const noexcept { return scheme_; }
  /// Advances x in place. `w` is ignored by the Euler kernel. Throws DivergenceError
  /// tagged with `step_index` when the result leaves the finite region.
  void step(MutVec x, double gamma, ConstVec u, const LevyAreaSurrogate& w, std::uint64_t step_index = 0,
            TalayIncrements* increments = nullptr);

 private:
  void euler(MutVec x, double gamma, ConstVec u);
  void talay(MutVec x, double gamma, ConstVec u, const LevyAreaSurrogate& w, TalayIncrements* increments);

  Scheme scheme_;
  const DiffusionModel* model_;
  std::size_t d_;
  std::size_t n_;
  Vector b_, sigma_, col_, jet_, jet_matrix_, coeff_, ab_;
  std::vector<Vector> cols_;
};

/// x + gamma b(x) + sqrt(gamma) sigma(x) u.
Vector euler_step(const DiffusionModel& model, ConstVec x, double gamma, ConstVec u);

/// Weak-order-2 Talay step
///   x + sqrt(g) sigma u + g (b + 1/2 (D sigma; sigma W^*)) + g^{3/2} c(x) u + g^2/2 Ab(x),
/// c_i = 1/2 [ (Db; sigma_i) + (D sigma_i; b) + 1/2 sum_k (D^2 sigma_i; sigma_k, sigma_k) ].
/// When `increments` is given the five terms are stored there.
Vector talay_step(const DiffusionModel& model, ConstVec x, double gamma, ConstVec u, const LevyAreaSurrogate& w,
                  TalayIncrements* increments = nullptr);

/// The gamma^{3/2} noise coefficient c(x) of the Talay step, row-major d x N.
Vector talay_noise_coefficient(const DiffusionModel& model, ConstVec x);

struct SchemeState {
  Vector x;
  std::uint64_t n = 0;
  double gamma_n = 0.0;
  std::uint64_t master_seed = 0;
  std::uint64_t stream_index = 0;
};

struct ChainSpec {
  Scheme scheme = Scheme::euler;
  InnovationDist innovation{};
};

/// Runs X_0 = x0 -> X_{n_steps}. Before step k every sink sees (X_{k-1}, gamma_k, eta_k).
/// Draw order per step: U (coordinates in order), then kappa(i,j) row-major i < j (Talay only).
SchemeState simulate(const ChainSpec& chain, const DiffusionModel& model, const WeightSchedule& weights,
                     std::uint64_t n_steps, ConstVec x0, RandomStream& rng, std::span<StateSink* const> sinks);

}  // namespace ergodic
