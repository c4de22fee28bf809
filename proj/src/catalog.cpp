#include "ergodic/catalog.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cctype>
#include <cmath>
#include <memory>
#include <sstream>

#include "ergodic/errors.hpp"
#include "ergodic/quadrature.hpp"

namespace ergodic {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

double parse_number(const std::string& text, const std::string& context) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse number '" + text + "' in " + context);
  }
  if (used != text.size()) throw ConfigError("cannot parse number '" + text + "' in " + context);
  return value;
}

// (D^k of a constant field) = 0 for every k >= 1.
void zero_jet(ConstVec, Directions, MutVec out) { std::fill(out.begin(), out.end(), 0.0); }

// Linear field x -> -theta x: first derivative -theta v, higher ones vanish.
DiffusionModel linear_model(Matrix theta, Matrix sigma) {
  DiffusionModel m;
  m.dim = theta.rows;
  m.noise_dim = sigma.cols;
  auto th = std::make_shared<const Matrix>(std::move(theta));
  auto sg = std::make_shared<const Matrix>(std::move(sigma));
  auto apply = [th](ConstVec v, MutVec out) {
    for (std::size_t i = 0; i < th->rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < th->cols; ++j) s -= (*th)(i, j) * v[j];
      out[i] = s;
    }
  };
  m.drift = apply;
  m.diffusion = [sg](ConstVec, MutVec out) { std::copy(sg->values.begin(), sg->values.end(), out.begin()); };
  m.drift_jet = [apply](ConstVec, Directions dirs, MutVec out) {
    if (dirs.size() == 1) {
      apply(dirs[0], out);
    } else {
      std::fill(out.begin(), out.end(), 0.0);
    }
  };
  m.drift_jet_order = 6;
  m.diffusion_jet = zero_jet;
  m.diffusion_jet_order = 6;
  return m;
}

Matrix scalar(double v) { return Matrix{1, 1, {v}}; }

// Sum over assignments of directions m.. to coordinates of
// prod v_m[j_m] times the partial derivative with those multiplicities.
double monomial_derivative(const std::vector<int>& exps, ConstVec x, Directions dirs, std::size_t m,
                           std::vector<int>& counts) {
  const std::size_t d = exps.size();
  if (m == dirs.size()) {
    double v = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      for (int c = 0; c < counts[j]; ++c) v *= static_cast<double>(exps[j] - c);
      for (int p = 0; p < exps[j] - counts[j]; ++p) v *= x[j];
    }
    return v;
  }
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    if (counts[j] >= exps[j] || dirs[m][j] == 0.0) continue;
    ++counts[j];
    total += dirs[m][j] * monomial_derivative(exps, x, dirs, m + 1, counts);
    --counts[j];
  }
  return total;
}

}  // namespace

Matrix parse_matrix(const std::string& text) {
  Matrix m;
  std::stringstream rows(text);
  std::string row;
  while (std::getline(rows, row, ';')) {
    std::stringstream entries(row);
    std::string entry;
    std::size_t count = 0;
    while (std::getline(entries, entry, ',')) {
      m.values.push_back(parse_number(trim(entry), "matrix '" + text + "'"));
      ++count;
    }
    if (m.rows == 0) m.cols = count;
    if (count == 0 || count != m.cols) throw ConfigError("matrix '" + text + "' has ragged or empty rows");
    ++m.rows;
  }
  if (m.rows == 0) throw ConfigError("matrix is empty");
  return m;
}

DiffusionModel ou1d(double theta, double sigma) { return linear_model(scalar(theta), scalar(sigma)); }

DiffusionModel double_well(double sigma) {
  DiffusionModel m;
  m.drift = [](ConstVec x, MutVec out) { out[0] = x[0] - x[0] * x[0] * x[0]; };
  m.diffusion = [sigma](ConstVec, MutVec out) { out[0] = sigma; };
  m.drift_jet = [](ConstVec x, Directions dirs, MutVec out) {
    double prod = 1.0;
    for (ConstVec v : dirs) prod *= v[0];
    switch (dirs.size()) {
      case 1:
        out[0] = (1.0 - 3.0 * x[0] * x[0]) * prod;
        break;
      case 2:
        out[0] = -6.0 * x[0] * prod;
        break;
      case 3:
        out[0] = -6.0 * prod;
        break;
      default:
        out[0] = 0.0;
    }
  };
  m.drift_jet_order = 6;
  m.diffusion_jet = zero_jet;
  m.diffusion_jet_order = 6;
  return m;
}

DiffusionModel ou_nd(const Matrix& theta, const Matrix& sigma) {
  if (theta.rows != theta.cols) throw ConfigError("theta_matrix must be square");
  if (sigma.rows != theta.rows) throw ConfigError("sigma_matrix must have as many rows as theta_matrix");
  return linear_model(theta, sigma);
}

InvariantLaw ou1d_invariant(double theta, double sigma) {
  if (!(theta > 0.0)) throw ConfigError("ou1d has an invariant law only for theta > 0");
  const double sd = std::abs(sigma) / std::sqrt(2.0 * theta);
  InvariantLaw law;
  law.expect = [sd](const std::function<double(ConstVec)>& g) {
    return normal_expectation([&](double z) { return g(ConstVec(&z, 1)); }, 0.0, sd, 40);
  };
  law.law1d = normal_law(0.0, sd);
  return law;
}

InvariantLaw double_well_invariant(double sigma) {
  if (sigma == 0.0) throw ConfigError("double_well has no invariant density for sigma = 0");
  const double s2 = sigma * sigma;
  // Density proportional to exp(-2 U / sigma^2), U(x) = x^4/4 - x^2/2; beyond
  // `edge` it is below e^{-60} of its peak.
  const double edge = 2.0 + std::pow(240.0 * s2, 0.25);
  auto density = [s2](double x) {
    const double u = 0.25 * x * x * x * x - 0.5 * x * x;
    return std::exp(-2.0 * u / s2);
  };
  using Rule = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double mass = Rule::integrate(density, -edge, edge, 20, 1e-14);
  InvariantLaw law;
  law.expect = [density, mass, edge](const std::function<double(ConstVec)>& g) {
    auto integrand = [&](double x) { return density(x) * g(ConstVec(&x, 1)); };
    return Rule::integrate(integrand, -edge, edge, 20, 1e-14) / mass;
  };
  law.law1d = tabulated_law(density, -edge, edge, 20001);
  return law;
}

InvariantLaw ou_nd_invariant(const Matrix& theta, const Matrix& sigma) {
  const auto d = static_cast<Eigen::Index>(theta.rows);
  Eigen::MatrixXd th(d, d), sg(d, static_cast<Eigen::Index>(sigma.cols));
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) th(i, j) = theta(i, j);
    for (Eigen::Index j = 0; j < sg.cols(); ++j) sg(i, j) = sigma(i, j);
  }
  const Eigen::EigenSolver<Eigen::MatrixXd> spectrum(th);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(spectrum.eigenvalues()(i).real() > 0.0)) throw ConfigError("theta_matrix must have eigenvalues with positive real part");
  }
  // Vectorized Lyapunov equation (I (x) Theta + Theta (x) I) vec S = vec(sigma sigma^*).
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd k(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) k.block(i * d, j * d, d, d) = id(i, j) * th + th(i, j) * id;
  const Eigen::MatrixXd q = sg * sg.transpose();
  const Eigen::VectorXd vec_s = k.fullPivLu().solve(Eigen::Map<const Eigen::VectorXd>(q.data(), d * d));
  Eigen::MatrixXd cov = Eigen::Map<const Eigen::MatrixXd>(vec_s.data(), d, d);
  cov = 0.5 * (cov + cov.transpose());

  InvariantLaw law;
  if (d == 1) law.law1d = normal_law(0.0, std::sqrt(cov(0, 0)));
  if (d > 3) return law;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  Eigen::MatrixXd root = ldlt.transpositionsP().transpose() * Eigen::MatrixXd(ldlt.matrixL());
  root = root * ldlt.vectorD().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  auto rule = std::make_shared<GaussRule>(gauss_hermite(16));
  law.expect = [rule, root, d](const std::function<double(ConstVec)>& g) {
    const std::size_t m = rule->nodes.size();
    std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
    Eigen::VectorXd z(d);
    Vector x(static_cast<std::size_t>(d));
    double total = 0.0;
    while (true) {
      double w = 1.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        z(i) = rule->nodes[idx[static_cast<std::size_t>(i)]];
        w *= rule->weights[idx[static_cast<std::size_t>(i)]];
      }
      const Eigen::VectorXd y = root * z;
      for (Eigen::Index i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = y(i);
      total += w * g(x);
      std::size_t i = 0;
      while (i < idx.size() && ++idx[i] == m) idx[i++] = 0;
      if (i == idx.size()) break;
    }
    return total;
  };
  return law;
}

Observable monomial(std::vector<int> exponents) {
  for (int e : exponents) {
    if (e < 0) throw std::invalid_argument("monomial exponents must be non-negative");
  }
  auto exps = std::make_shared<const std::vector<int>>(std::move(exponents));
  Observable f;
  f.max_order = 6;
  f.value = [exps](ConstVec x) {
    double v = 1.0;
    for (std::size_t j = 0; j < exps->size(); ++j)
      for (int p = 0; p < (*exps)[j]; ++p) v *= x[j];
    return v;
  };
  f.derivative = [exps](ConstVec x, Directions dirs) {
    thread_local std::vector<int> counts;
    counts.assign(exps->size(), 0);
    return monomial_derivative(*exps, x, dirs, 0, counts);
  };
  return f;
}

Observable parse_observable(const std::string& text, std::size_t dim) {
  const std::string spec = trim(text);
  std::vector<int> exps(dim, 0);
  if (spec == "1") return monomial(exps);
  std::stringstream factors(spec);
  std::string factor;
  auto fail = [&]() { return ConfigError("cannot parse observable '" + text + "' (expected e.g. x^2, x1*x2, 1)"); };
  while (std::getline(factors, factor, '*')) {
    factor = trim(factor);
    if (factor.empty() || factor[0] != 'x') throw fail();
    std::size_t pos = 1;
    std::size_t coord = 1;
    if (pos < factor.size() && std::isdigit(static_cast<unsigned char>(factor[pos]))) {
      coord = 0;
      while (pos < factor.size() && std::isdigit(static_cast<unsigned char>(factor[pos])))
        coord = coord * 10 + static_cast<std::size_t>(factor[pos++] - '0');
    } else if (dim != 1) {
      throw ConfigError("observable '" + text + "' must name coordinates (x1, x2, ...) when d > 1");
    }
    int power = 1;
    if (pos < factor.size()) {
      if (factor[pos] != '^' || pos + 1 == factor.size()) throw fail();
      const std::string digits = factor.substr(pos + 1);
      for (char c : digits)
        if (!std::isdigit(static_cast<unsigned char>(c))) throw fail();
      power = std::stoi(digits);
    }
    if (coord < 1 || coord > dim) throw ConfigError("observable '" + text + "' refers to a coordinate outside 1.." + std::to_string(dim));
    exps[coord - 1] += power;
  }
  int degree = 0;
  for (int e : exps) degree += e;
  if (degree > 6) throw ConfigError("observable '" + text + "' has degree above 6");
  return monomial(exps);
}

}  // namespace ergodic
