#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace wood {

/// A point on the probability simplex with at least two classes.
///
/// Construction validates the simplex invariants: every entry is finite and
/// non-negative and the entries sum to one within 1e-9.
class ProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit ProbVector(std::vector<double> values);
  explicit ProbVector(std::span<const double> values)
      : ProbVector(std::vector<double>(values.begin(), values.end())) {}

  static ProbVector uniform(std::size_t k);
  static ProbVector one_hot(std::size_t k, std::size_t index);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  /// Index of the largest entry; ties resolve to the lowest index.
  std::size_t argmax() const noexcept;
  double max() const noexcept { return values_[argmax()]; }

  /// Index of the single unit entry, or size() when not one-hot.
  std::size_t one_hot_index() const noexcept;

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  std::vector<double> values_;
};

/// Subtracts the mean, mapping a gradient onto the simplex tangent space.
std::vector<double> centered(std::span<const double> g);

}  // namespace wood
