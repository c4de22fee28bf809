#include "ergodic/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "ergodic/errors.hpp"

namespace ergodic {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double sup_norm(ConstVec v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

// Step along direction v so that the displacement in x-space has size scale * (1 + |x|).
double fd_step(ConstVec x, ConstVec v, double scale) {
  const double nv = sup_norm(v);
  return nv == 0.0 ? 0.0 : scale * (1.0 + sup_norm(x)) / nv;
}

// Central differences of a field F: R^d -> R^m along one or two directions.
void central_difference(const DiffusionModel::Field& field, std::size_t out_size, ConstVec x, Directions dirs,
                        MutVec out) {
  std::fill(out.begin(), out.end(), 0.0);
  Vector shifted(x.begin(), x.end());
  Vector plus(out_size), minus(out_size);
  if (dirs.size() == 1) {
    const double h = fd_step(x, dirs[0], std::cbrt(kEps));
    if (h == 0.0) return;
    for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] + h * dirs[0][i];
    field(shifted, plus);
    for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] - h * dirs[0][i];
    field(shifted, minus);
    for (std::size_t k = 0; k < out_size; ++k) out[k] = (plus[k] - minus[k]) / (2.0 * h);
    return;
  }
  const double h1 = fd_step(x, dirs[0], std::pow(kEps, 0.25));
  const double h2 = fd_step(x, dirs[1], std::pow(kEps, 0.25));
  if (h1 == 0.0 || h2 == 0.0) return;
  Vector value(out_size);
  const std::array<std::array<double, 3>, 4> corners{{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}}};
  for (const auto& c : corners) {
    for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] + c[0] * h1 * dirs[0][i] + c[1] * h2 * dirs[1][i];
    field(shifted, value);
    for (std::size_t k = 0; k < out_size; ++k) out[k] += c[2] * value[k];
  }
  for (std::size_t k = 0; k < out_size; ++k) out[k] /= 4.0 * h1 * h2;
}

int available_order(const DiffusionModel::Jet& jet, int jet_order, DerivativeFallback fallback) {
  const int analytic = jet ? jet_order : 0;
  if (fallback == DerivativeFallback::central_finite_difference) return std::max(analytic, 2);
  return analytic;
}

void field_derivative(const DiffusionModel& model, const DiffusionModel::Field& field, const DiffusionModel::Jet& jet,
                      int jet_order, std::size_t out_size, const char* name, ConstVec x, Directions dirs,
                      MutVec out) {
  const int k = static_cast<int>(dirs.size());
  if (k == 0) {
    field(x, out);
    return;
  }
  if (jet && k <= jet_order) {
    jet(x, dirs, out);
    return;
  }
  if (model.fallback == DerivativeFallback::central_finite_difference && k <= 2) {
    central_difference(field, out_size, x, dirs, out);
    return;
  }
  throw InsufficientOrderError(std::string("derivative of order ") + std::to_string(k) + " of " + name +
                               " is not available");
}

void require_order(const Observable& f, int order, const char* op) {
  if (f.max_order < order) {
    throw InsufficientOrderError("insufficient observable order: " + std::string(op) + " needs order >= " +
                                 std::to_string(order) + ", got " + std::to_string(f.max_order));
  }
}

// Column i of a row-major d x N matrix.
Vector column(const Vector& m, std::size_t d, std::size_t n, std::size_t i) {
  Vector c(d);
  for (std::size_t l = 0; l < d; ++l) c[l] = m[l * n + i];
  return c;
}

Vector mat_vec(const Vector& m, std::size_t d, std::size_t n, ConstVec u) {
  Vector r(d, 0.0);
  for (std::size_t l = 0; l < d; ++l)
    for (std::size_t i = 0; i < n; ++i) r[l] += m[l * n + i] * u[i];
  return r;
}

// Fields of the Talay construction frozen at one state.
struct LocalFields {
  std::size_t d = 0;
  std::size_t n = 0;
  Vector b;
  Vector sigma;
  std::vector<Vector> sigma_cols;
  Vector sigma_tilde;
  Vector ab;
  // lsig[j] = (D sigma; sigma_j), a d x N matrix whose column i is L^j sigma_i.
  std::vector<Vector> lsig;

  static LocalFields euler(const DiffusionModel& model, ConstVec x) {
    LocalFields f;
    f.d = model.dim;
    f.n = model.noise_dim;
    f.b = model.b(x);
    f.sigma = model.sigma(x);
    return f;
  }

  static LocalFields talay(const DiffusionModel& model, ConstVec x) {
    LocalFields f = euler(model, x);
    for (std::size_t j = 0; j < f.n; ++j) f.sigma_cols.push_back(column(f.sigma, f.d, f.n, j));
    f.sigma_tilde = ergodic::sigma_tilde(model, x);
    f.ab = drift_generator(model, x);
    for (std::size_t j = 0; j < f.n; ++j) {
      Vector m(f.d * f.n);
      const std::array<ConstVec, 1> dirs{f.sigma_cols[j]};
      diffusion_derivative(model, x, dirs, m);
      f.lsig.push_back(std::move(m));
    }
    return f;
  }

  // (D sigma; sigma W^*) = sum_{i,j} W(i,j) L^j sigma_i.
  Vector levy_term(const LevyAreaSurrogate& w) const {
    Vector g(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double wij = w(i, j);
        if (wij == 0.0) continue;
        for (std::size_t l = 0; l < d; ++l) g[l] += wij * lsig[j][l * n + i];
      }
    return g;
  }
};

// Contracts D^k f(x) against a list of directions.
class Contractor {
 public:
  Contractor(const Observable& f, ConstVec x) : f_(f), x_(x) {}
  double operator()(std::initializer_list<ConstVec> dirs) const {
    return directional(f_, x_, Directions(dirs.begin(), dirs.size()));
  }

 private:
  const Observable& f_;
  ConstVec x_;
};

Vector add(const Vector& a, const Vector& b) {
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

// Deterministic part and integrand of M_1 (Talay form) applied to g.
double m1_talay_deterministic(const LocalFields& fields, const Contractor& D) { return -D({fields.ab}); }

double m1_talay_integrand(const LocalFields& fields, const Contractor& D, ConstVec u, const LevyAreaSurrogate& w) {
  const Vector g = fields.levy_term(w);
  const Vector su = mat_vec(fields.sigma, fields.d, fields.n, u);
  const Vector stu = mat_vec(fields.sigma_tilde, fields.d, fields.n, u);
  const Vector bg = add(fields.b, g);
  const double second = 0.5 * (D({fields.b, fields.b}) + 2.0 * D({fields.b, g}) + D({g, g}));
  const double third = 0.5 * (D({su, su, bg}) + D({su, su, stu}));
  const double fourth = D({su, su, su, su}) / 24.0;
  return second + third + fourth;
}

double m2_tilde_integrand(const LocalFields& fields, const Contractor& D, ConstVec u, const LevyAreaSurrogate& w) {
  const Vector g = fields.levy_term(w);
  const Vector su = mat_vec(fields.sigma, fields.d, fields.n, u);
  const Vector stu = mat_vec(fields.sigma_tilde, fields.d, fields.n, u);
  const Vector bg = add(fields.b, g);
  const Vector& b = fields.b;
  const Vector& ab = fields.ab;

  const double second = 0.5 * D({stu, stu}) + D({b, ab});
  const double third =
      0.5 * (D({g, g, g}) / 3.0 + D({b, b, g}) + D({su, su, ab}) + D({su, bg, stu}) + D({b, b, b}) / 3.0);
  const double fourth =
      0.5 * (0.5 * (D({su, su, b, b}) + 2.0 * D({su, su, b, g}) + D({su, su, g, g})) + D({su, su, su, stu}) / 3.0);
  const double fifth = D({su, su, su, su, bg}) / 24.0;
  const double sixth = D({su, su, su, su, su, su}) / 720.0;
  return second + third + fourth + fifth + sixth;
}

}  // namespace

Vector DiffusionModel::b(ConstVec x) const {
  Vector out(dim);
  drift(x, out);
  return out;
}

Vector DiffusionModel::sigma(ConstVec x) const {
  Vector out(dim * noise_dim);
  diffusion(x, out);
  return out;
}

void drift_derivative(const DiffusionModel& model, ConstVec x, Directions dirs, MutVec out) {
  field_derivative(model, model.drift, model.drift_jet, model.drift_jet_order, model.dim, "b", x, dirs, out);
}

void diffusion_derivative(const DiffusionModel& model, ConstVec x, Directions dirs, MutVec out) {
  field_derivative(model, model.diffusion, model.diffusion_jet, model.diffusion_jet_order,
                   model.dim * model.noise_dim, "sigma", x, dirs, out);
}

int drift_order(const DiffusionModel& model) {
  return available_order(model.drift_jet, model.drift_jet_order, model.fallback);
}

int diffusion_order(const DiffusionModel& model) {
  return available_order(model.diffusion_jet, model.diffusion_jet_order, model.fallback);
}

double directional(const Observable& f, ConstVec x, Directions dirs) {
  if (dirs.empty()) return f.value(x);
  if (static_cast<int>(dirs.size()) > f.max_order) {
    throw InsufficientOrderError("insufficient observable order: derivative of order " +
                                 std::to_string(dirs.size()) + " requested, max_order is " +
                                 std::to_string(f.max_order));
  }
  return f.derivative(x, dirs);
}

Observable linear_combination(double a, const Observable& f, double b, const Observable& g) {
  Observable h;
  h.max_order = std::min(f.max_order, g.max_order);
  h.value = [a, b, f, g](ConstVec x) { return a * f.value(x) + b * g.value(x); };
  h.derivative = [a, b, f, g](ConstVec x, Directions dirs) {
    return a * f.derivative(x, dirs) + b * g.derivative(x, dirs);
  };
  return h;
}

double generator_apply(const DiffusionModel& model, const Observable& f, ConstVec x) {
  require_order(f, 2, "generator_apply");
  thread_local Vector b;
  thread_local Vector sigma;
  thread_local Vector col;
  b.resize(model.dim);
  sigma.resize(model.dim * model.noise_dim);
  col.resize(model.dim);
  model.drift(x, b);
  model.diffusion(x, sigma);
  std::array<ConstVec, 2> dirs{ConstVec(b), ConstVec(b)};
  double result = f.derivative(x, Directions(dirs.data(), 1));
  double diffusion_part = 0.0;
  for (std::size_t i = 0; i < model.noise_dim; ++i) {
    for (std::size_t l = 0; l < model.dim; ++l) col[l] = sigma[l * model.noise_dim + i];
    dirs = {ConstVec(col), ConstVec(col)};
    diffusion_part += f.derivative(x, dirs);
  }
  return result + 0.5 * diffusion_part;
}

double vf_operator(const DiffusionModel& model, const Observable& f, ConstVec x) {
  require_order(f, 1, "vf_operator");
  const Vector sigma = model.sigma(x);
  double total = 0.0;
  for (std::size_t i = 0; i < model.noise_dim; ++i) {
    const Vector col = column(sigma, model.dim, model.noise_dim, i);
    const std::array<ConstVec, 1> dirs{col};
    const double component = f.derivative(x, dirs);  // (sigma^* grad f)_i
    total += component * component;
  }
  return total;
}

Vector sigma_tilde(const DiffusionModel& model, ConstVec x) {
  const std::size_t d = model.dim;
  const std::size_t n = model.noise_dim;
  const Vector b = model.b(x);
  const Vector sigma = model.sigma(x);
  std::vector<Vector> cols;
  for (std::size_t i = 0; i < n; ++i) cols.push_back(column(sigma, d, n, i));

  Vector result(d * n, 0.0);
  Vector db(d);
  Vector dsigma_b(d * n);
  Vector hessian(d * n);
  {
    const std::array<ConstVec, 1> dirs{b};
    diffusion_derivative(model, x, dirs, dsigma_b);
  }
  Vector hess_sum(d * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::array<ConstVec, 2> dirs{cols[k], cols[k]};
    diffusion_derivative(model, x, dirs, hessian);
    for (std::size_t e = 0; e < d * n; ++e) hess_sum[e] += hessian[e];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<ConstVec, 1> dirs{cols[i]};
    drift_derivative(model, x, dirs, db);
    for (std::size_t l = 0; l < d; ++l) {
      result[l * n + i] = db[l] + dsigma_b[l * n + i] + hess_sum[l * n + i];
    }
  }
  return result;
}

Vector drift_generator(const DiffusionModel& model, ConstVec x) {
  const std::size_t d = model.dim;
  const std::size_t n = model.noise_dim;
  const Vector b = model.b(x);
  const Vector sigma = model.sigma(x);
  Vector result(d);
  {
    const std::array<ConstVec, 1> dirs{b};
    drift_derivative(model, x, dirs, result);
  }
  Vector hessian(d);
  for (std::size_t k = 0; k < n; ++k) {
    const Vector col = column(sigma, d, n, k);
    const std::array<ConstVec, 2> dirs{col, col};
    drift_derivative(model, x, dirs, hessian);
    for (std::size_t l = 0; l < d; ++l) result[l] += 0.5 * hessian[l];
  }
  return result;
}

Observable generator_observable(const DiffusionModel& model, const Observable& f) {
  require_order(f, 2, "generator_observable");
  const int jets = std::min(model.drift_jet ? model.drift_jet_order : 0,
                            model.diffusion_jet ? model.diffusion_jet_order : 0);
  Observable af;
  af.max_order = std::max(0, std::min(f.max_order - 2, jets));
  af.value = [model, f](ConstVec x) { return generator_apply(model, f, x); };
  af.derivative = [model, f](ConstVec x, Directions dirs) {
    const std::size_t k = dirs.size();
    const std::size_t d = model.dim;
    const std::size_t n = model.noise_dim;
    const std::size_t subsets = std::size_t{1} << k;

    // Derivatives of b and sigma along every subset of the directions.
    std::vector<Vector> b_jet(subsets, Vector(d));
    std::vector<Vector> sigma_jet(subsets, Vector(d * n));
    std::vector<ConstVec> picked;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      picked.clear();
      for (std::size_t j = 0; j < k; ++j)
        if (mask >> j & 1u) picked.push_back(dirs[j]);
      if (picked.empty()) {
        model.drift(x, b_jet[mask]);
        model.diffusion(x, sigma_jet[mask]);
      } else {
        model.drift_jet(x, picked, b_jet[mask]);
        model.diffusion_jet(x, picked, sigma_jet[mask]);
      }
    }
    // Vanishing jets (constant sigma, affine b) drop whole families of terms.
    auto is_zero = [](const Vector& v) { return std::all_of(v.begin(), v.end(), [](double e) { return e == 0.0; }); };
    std::vector<char> b_zero(subsets), sigma_zero(subsets);
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      b_zero[mask] = is_zero(b_jet[mask]);
      sigma_zero[mask] = is_zero(sigma_jet[mask]);
    }
    auto with_rest = [&](std::initializer_list<ConstVec> head, std::size_t mask) {
      std::vector<ConstVec> all(head);
      for (std::size_t j = 0; j < k; ++j)
        if (mask >> j & 1u) all.push_back(dirs[j]);
      return f.derivative(x, all);
    };

    // <b, grad f>: each direction hits either b or f.
    double drift_part = 0.0;
    for (std::size_t s = 0; s < subsets; ++s) {
      if (b_zero[s]) continue;
      drift_part += with_rest({b_jet[s]}, (subsets - 1) & ~s);
    }

    // 1/2 sum_i (D^2 f; sigma_i, sigma_i): each direction hits the first sigma,
    // the second sigma or f.
    double diffusion_part = 0.0;
    std::size_t assignments = 1;
    for (std::size_t j = 0; j < k; ++j) assignments *= 3;
    for (std::size_t code = 0; code < assignments; ++code) {
      std::size_t first = 0, second = 0, rest = 0, c = code;
      for (std::size_t j = 0; j < k; ++j, c /= 3) {
        const std::size_t bit = std::size_t{1} << j;
        if (c % 3 == 0) first |= bit;
        else if (c % 3 == 1) second |= bit;
        else rest |= bit;
      }
      if (sigma_zero[first] || sigma_zero[second]) continue;
      for (std::size_t i = 0; i < n; ++i) {
        const Vector a = column(sigma_jet[first], d, n, i);
        const Vector b = column(sigma_jet[second], d, n, i);
        diffusion_part += with_rest({a, b}, rest);
      }
    }
    return drift_part + 0.5 * diffusion_part;
  };
  return af;
}

Estimate m1_euler(const DiffusionModel& model, const Observable& f, ConstVec x, const InnovationDist& innovation,
                  const Quadrature& quadrature) {
  require_order(f, 4, "m1_euler");
  const LocalFields fields = LocalFields::euler(model, x);
  const Contractor D(f, x);
  const double deterministic = -0.5 * D({fields.b, fields.b});
  const Estimate e = expectation(innovation, false, quadrature, [&](ConstVec u, const LevyAreaSurrogate&) {
    const Vector su = mat_vec(fields.sigma, fields.d, fields.n, u);
    return 0.5 * D({su, su, fields.b}) + D({su, su, su, su}) / 24.0;
  });
  return {deterministic - e.value, e.std_error};
}

Estimate m1_talay(const DiffusionModel& model, const Observable& f, ConstVec x, const InnovationDist& innovation,
                  const Quadrature& quadrature) {
  require_order(f, 4, "m1_talay");
  const LocalFields fields = LocalFields::talay(model, x);
  const Contractor D(f, x);
  const Estimate e = expectation(innovation, true, quadrature, [&](ConstVec u, const LevyAreaSurrogate& w) {
    return m1_talay_integrand(fields, D, u, w);
  });
  return {m1_talay_deterministic(fields, D) - e.value, e.std_error};
}

Estimate m2_tilde_talay(const DiffusionModel& model, const Observable& f, ConstVec x,
                        const InnovationDist& innovation, const Quadrature& quadrature) {
  require_order(f, 6, "m2_tilde_talay");
  const LocalFields fields = LocalFields::talay(model, x);
  const Contractor D(f, x);
  return expectation(innovation, true, quadrature, [&](ConstVec u, const LevyAreaSurrogate& w) {
    return m2_tilde_integrand(fields, D, u, w);
  });
}

Estimate m2_talay(const DiffusionModel& model, const Observable& f, const Observable& af, ConstVec x,
                  const InnovationDist& innovation, const Quadrature& quadrature) {
  require_order(f, 6, "m2_talay");
  require_order(af, 4, "m2_talay (Af)");
  const LocalFields fields = LocalFields::talay(model, x);
  const Contractor Df(f, x);
  const Contractor Daf(af, x);
  // One joint expectation so that the Monte Carlo error is reported once.
  const Estimate e = expectation(innovation, true, quadrature, [&](ConstVec u, const LevyAreaSurrogate& w) {
    return -m1_talay_integrand(fields, Daf, u, w) + m2_tilde_integrand(fields, Df, u, w);
  });
  return {m1_talay_deterministic(fields, Daf) + e.value, e.std_error};
}

Estimate m2_talay(const DiffusionModel& model, const Observable& f, ConstVec x, const InnovationDist& innovation,
                  const Quadrature& quadrature) {
  const Observable af = generator_observable(model, f);
  if (af.max_order < 4) {
    throw InsufficientOrderError(
        "m2_talay needs Af with derivatives to order 4: supply analytic jets of b and sigma to order 4 "
        "(nested finite differences are refused) or pass Af explicitly");
  }
  return m2_talay(model, f, af, x, innovation, quadrature);
}

}  // namespace ergodic
