#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ergodic/empirical.hpp"
#include "ergodic/model.hpp"

namespace ergodic {

/// Dense row-major matrix as written in configs: rows separated by ';', entries by ','.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

Matrix parse_matrix(const std::string& text);

/// b(x) = -theta x, sigma constant, d = N = 1.
DiffusionModel ou1d(double theta, double sigma);
/// b(x) = x - x^3 (gradient of x^2/2 - x^4/4), sigma constant, d = N = 1.
DiffusionModel double_well(double sigma);
/// b(x) = -Theta x, sigma a constant d x N matrix.
DiffusionModel ou_nd(const Matrix& theta, const Matrix& sigma);

/// Invariant law of a catalog model: expectations always, a 1D law when d = 1.
struct InvariantLaw {
  std::function<double(const std::function<double(ConstVec)>&)> expect;
  std::optional<AnalyticLaw1D> law1d;
};

InvariantLaw ou1d_invariant(double theta, double sigma);
InvariantLaw double_well_invariant(double sigma);
/// Gaussian N(0, S) with Theta S + S Theta^* = sigma sigma^*. Expectations use a
/// tensor Gauss-Hermite rule and are available for d <= 3.
InvariantLaw ou_nd_invariant(const Matrix& theta, const Matrix& sigma);

/// prod_j x_j^{e_j} with exact derivatives of every order (max_order 6).
Observable monomial(std::vector<int> exponents);

/// Parses "1", "x", "x^k", "x2", "x1*x2", "x1^2*x3^3" into a monomial on R^dim.
/// In dimension one "x" and "x1" are the same coordinate.
Observable parse_observable(const std::string& text, std::size_t dim);

}  // namespace ergodic
