#include "wood/prob_vector.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "wood/error.hpp"

namespace wood {

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) {
    throw DimensionError("probability vector needs K >= 2, got " +
                         std::to_string(values_.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double p = values_[i];
    if (!std::isfinite(p) || p < 0.0) {
      throw InputError("probability entry " + std::to_string(i) +
                       " is negative or non-finite");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InputError("probability entries sum to " + std::to_string(sum));
  }
}

ProbVector ProbVector::uniform(std::size_t k) {
  return ProbVector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

ProbVector ProbVector::one_hot(std::size_t k, std::size_t index) {
  if (index >= k) {
    throw IndexError("class " + std::to_string(index) + " out of range for K=" +
                     std::to_string(k));
  }
  std::vector<double> v(k, 0.0);
  v[index] = 1.0;
  return ProbVector(std::move(v));
}

std::size_t ProbVector::argmax() const noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values_.size(); ++i) {
    if (values_[i] > values_[best]) best = i;
  }
  return best;
}

std::size_t ProbVector::one_hot_index() const noexcept {
  std::size_t hot = values_.size();
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] == 1.0) {
      hot = i;
    } else if (values_[i] != 0.0) {
      return values_.size();
    }
  }
  return hot;
}

std::vector<double> centered(std::span<const double> g) {
  const double mean =
      std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
  std::vector<double> out(g.begin(), g.end());
  for (double& x : out) x -= mean;
  return out;
}

}  // namespace wood
