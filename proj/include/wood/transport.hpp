#pragma once

// Discrete optimal transport between two distributions on K classes.
//
// Couplings P are K×K with row sums equal to the first marginal r1 and column
// sums equal to the second marginal r2; the transport cost is Σ P[i][j] M[i][j].

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wood/prob_vector.hpp"

namespace wood {

enum class CostKind { Binary, Dynamic, General };

/// Non-negative K×K transport cost matrix stored row-major.
class CostMatrix {
 public:
  /// Validates non-negativity, squareness, and the Binary structure when
  /// `kind == CostKind::Binary`.
  CostMatrix(std::size_t k, std::vector<double> entries, CostKind kind);

  std::size_t size() const noexcept { return k_; }
  CostKind kind() const noexcept { return kind_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * k_ + j]; }
  std::span<const double> entries() const noexcept { return entries_; }
  double max_entry() const noexcept;

  CostMatrix transposed() const;

 private:
  std::size_t k_;
  std::vector<double> entries_;
  CostKind kind_;
};

enum class SinkhornDomain {
  Auto,    ///< scaled iterations, retried in the log domain on overflow
  Scaled,  ///< scaled iterations only; overflow is a NumericError
  Log,     ///< log-domain iterations only
};

struct SinkhornConfig {
  double lambda = 50.0;
  std::size_t max_iter = 1000;
  /// Threshold on the max relative change of v between iterations.
  double tol = 1e-9;
  SinkhornDomain domain = SinkhornDomain::Auto;

  void validate() const;
};

struct TransportResult {
  /// Transport term <P, M>; the reported distance.
  double value = 0.0;
  /// Entropic objective <P, M> - h(P)/lambda whose gradient the dual gives.
  double regularized_value = 0.0;
  /// Scaling vectors of P = diag(u) K diag(v). When `log_domain` is set they
  /// hold log u and log v instead.
  std::vector<double> u;
  std::vector<double> v;
  bool log_domain = false;
  /// Optimal plan, row-major K×K.
  std::vector<double> plan;
  double lambda = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Unregularized optimal transport cost. One-hot marginals take the unique
/// singleton coupling; otherwise a min-cost-flow solve for K <= max_k.
double exact_wasserstein(const ProbVector& r1, const ProbVector& r2, const CostMatrix& m,
                         std::size_t max_k = 16);

/// Entropically regularized transport by Sinkhorn-Knopp scaling.
/// Non-convergence is reported through `converged`, never thrown.
TransportResult sinkhorn_distance(const ProbVector& r1, const ProbVector& r2,
                                  const CostMatrix& m, const SinkhornConfig& cfg);

/// Gradient of the entropic objective with respect to r2, (1/λ)(log v* + 1/2).
/// Defined up to an additive constant; center before comparing.
std::vector<double> sinkhorn_gradient(const TransportResult& result, const SinkhornConfig& cfg);

enum class Axiom { NonNegativity, Identity, Symmetry, Triangle };

struct AxiomViolation {
  std::size_t sample = 0;
  Axiom axiom = Axiom::NonNegativity;
  double excess = 0.0;
};

struct AxiomReport {
  std::size_t checked = 0;
  std::vector<AxiomViolation> violations;
};

struct ProbTriple {
  ProbVector a;
  ProbVector b;
  ProbVector c;
};

/// Checks the distance axioms of exact_wasserstein on sample triples. Only
/// Binary matrices are accepted; the dynamic matrix is not a metric.
AxiomReport metric_axioms_check(std::span<const ProbTriple> samples, const CostMatrix& m,
                                double tolerance = 1e-9);

std::string to_string(Axiom axiom);

}  // namespace wood
