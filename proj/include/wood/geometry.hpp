#pragma once

// Distance matrices and the Wasserstein OOD score.

#include <cstddef>
#include <vector>

#include "wood/prob_vector.hpp"
#include "wood/transport.hpp"

namespace wood {

enum class ScoreEvaluation { ClosedForm, Sinkhorn };

struct ScoreConfig {
  CostKind matrix_kind = CostKind::Dynamic;
  ScoreEvaluation evaluation = ScoreEvaluation::ClosedForm;
  SinkhornConfig sinkhorn{};
};

/// Zero diagonal, unit off-diagonal cost.
CostMatrix binary_matrix(std::size_t k);

/// Column j is f for j != k and 1 - f for j == k.
CostMatrix dynamic_matrix(const ProbVector& f, std::size_t k);

/// Matrix of the requested kind for comparing f with the label k.
CostMatrix score_matrix(CostKind kind, const ProbVector& f, std::size_t k);

/// Runs Sinkhorn between the one-hot label (first marginal) and f (second
/// marginal), so the gradient comes out with respect to f.
TransportResult onehot_transport(const ProbVector& f, std::size_t k, CostKind kind,
                                 const SinkhornConfig& cfg);

/// W(f, y^k). Closed form: Binary 1 - f[k], Dynamic 1 - Σ f².
double wasserstein_to_onehot(const ProbVector& f, std::size_t k, const ScoreConfig& cfg);

struct ScoreResult {
  double score = 0.0;
  std::size_t argmin = 0;
};

/// Score and the minimizing class in one pass.
ScoreResult evaluate_score(const ProbVector& f, const ScoreConfig& cfg);

/// min_k W(f, y^k). The dynamic kind needs a single evaluation since every
/// label gives the same distance.
double wood_score(const ProbVector& f, const ScoreConfig& cfg);

/// The minimizing class of wood_score; lowest index on ties and 0 for the
/// dynamic kind.
std::size_t score_argmin_class(const ProbVector& f, const ScoreConfig& cfg);

}  // namespace wood
