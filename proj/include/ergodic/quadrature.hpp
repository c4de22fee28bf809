#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace ergodic {

/// Gauss-Hermite rule for the standard normal weight: sum_i w_i g(z_i) = E[g(Z)]
/// exactly for polynomials of degree <= 2n - 1. Weights sum to one.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussRule gauss_hermite(std::size_t n);

/// E[g(X)] for X ~ N(mean, stddev^2) with an n-point rule.
double normal_expectation(const std::function<double(double)>& g, double mean, double stddev, std::size_t n = 40);

}  // namespace ergodic
