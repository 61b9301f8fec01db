#pragma once

// Brute-force reference implementations for the test suite. Nothing here
// depends on the library under test.

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LpSolution {
  double value = 0.0;
  std::vector<double> coupling;  // row-major K×K, rows follow r1
};

inline constexpr std::size_t kMaxLpClasses = 16;

/// Transportation LP min <P, M> s.t. P 1 = r1, Pᵀ 1 = r2, P >= 0, solved with
/// a dense two-phase simplex tableau and Bland's pivoting rule.
LpSolution lp_transport(const std::vector<double>& r1, const std::vector<double>& r2,
                        const std::vector<double>& m);

/// Central differences of `fn` along an orthonormal basis of the simplex
/// tangent plane {x : Σx = 0}; the result is the ambient gradient projected
/// onto that plane, so it has zero mean.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                const std::vector<double>& point, double step);

/// (wins + ties/2) / (n_ind · n_ood) by explicit enumeration of pairs.
double pairwise_auroc(const std::vector<double>& ind_scores, const std::vector<double>& ood_scores);

}  // namespace oracle
