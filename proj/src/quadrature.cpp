#include "ergodic/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace ergodic {

GaussRule gauss_hermite(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Gauss-Hermite rule needs at least one node");
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(k));
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    rule.nodes[k] = solver.eigenvalues()(i);
    const double v = solver.eigenvectors()(0, i);
    rule.weights[k] = v * v;
  }
  return rule;
}

double normal_expectation(const std::function<double(double)>& g, double mean, double stddev, std::size_t n) {
  const GaussRule rule = gauss_hermite(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) total += rule.weights[k] * g(mean + stddev * rule.nodes[k]);
  return total;
}

}  // namespace ergodic
