#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "wood/prob_vector.hpp"

namespace wood::testing {

/// Dirichlet(1, ..., 1) sample with every entry at least `floor`.
inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t k, double floor = 0.0) {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  for (double& x : p) sum += (x = gamma(rng));
  const double scale = 1.0 - floor * static_cast<double>(k);
  for (double& x : p) x = floor + scale * x / sum;
  return p;
}

inline ProbVector random_prob(std::mt19937_64& rng, std::size_t k, double floor = 0.0) {
  return ProbVector(random_simplex(rng, k, floor));
}

inline std::vector<double> to_vector(const ProbVector& p) {
  return {p.values().begin(), p.values().end()};
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double max_abs(const std::vector<double>& a) {
  double worst = 0.0;
  for (double x : a) worst = std::max(worst, std::abs(x));
  return worst;
}

}  // namespace wood::testing
