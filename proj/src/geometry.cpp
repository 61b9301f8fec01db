#include "wood/geometry.hpp"

#include <string>

#include "wood/error.hpp"

namespace wood {

namespace {

void require_class(const ProbVector& f, std::size_t k) {
  if (k >= f.size()) {
    throw IndexError("class " + std::to_string(k) + " out of range for K=" +
                     std::to_string(f.size()));
  }
}

double dynamic_closed_form(const ProbVector& f) {
  double sum_sq = 0.0;
  for (double p : f.values()) sum_sq += p * p;
  return 1.0 - sum_sq;
}

TransportResult converged_or_throw(TransportResult res, std::size_t k) {
  if (!res.converged) {
    throw NumericError("Sinkhorn did not converge for class " + std::to_string(k) + " after " +
                       std::to_string(res.iterations) + " iterations (lambda=" +
                       std::to_string(res.lambda) + ")");
  }
  return res;
}

}  // namespace

CostMatrix binary_matrix(std::size_t k) {
  if (k < 2) throw DimensionError("binary matrix needs K >= 2, got " + std::to_string(k));
  std::vector<double> m(k * k, 1.0);
  for (std::size_t i = 0; i < k; ++i) m[i * k + i] = 0.0;
  return CostMatrix(k, std::move(m), CostKind::Binary);
}

CostMatrix dynamic_matrix(const ProbVector& f, std::size_t k) {
  require_class(f, k);
  const std::size_t n = f.size();
  std::vector<double> m(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i * n + j] = j == k ? 1.0 - f[i] : f[i];
  }
  return CostMatrix(n, std::move(m), CostKind::Dynamic);
}

CostMatrix score_matrix(CostKind kind, const ProbVector& f, std::size_t k) {
  switch (kind) {
    case CostKind::Binary: return binary_matrix(f.size());
    case CostKind::Dynamic: return dynamic_matrix(f, k);
    case CostKind::General: break;
  }
  throw ConfigError("score path accepts only binary or dynamic matrices");
}

TransportResult onehot_transport(const ProbVector& f, std::size_t k, CostKind kind,
                                 const SinkhornConfig& cfg) {
  require_class(f, k);
  // The matrices index rows by f; transport rows here belong to the label.
  const CostMatrix cost = score_matrix(kind, f, k).transposed();
  return sinkhorn_distance(ProbVector::one_hot(f.size(), k), f, cost, cfg);
}

double wasserstein_to_onehot(const ProbVector& f, std::size_t k, const ScoreConfig& cfg) {
  require_class(f, k);
  if (cfg.evaluation == ScoreEvaluation::Sinkhorn) {
    return converged_or_throw(onehot_transport(f, k, cfg.matrix_kind, cfg.sinkhorn), k).value;
  }
  switch (cfg.matrix_kind) {
    case CostKind::Binary: return 1.0 - f[k];
    case CostKind::Dynamic: return dynamic_closed_form(f);
    case CostKind::General: break;
  }
  throw ConfigError("score path accepts only binary or dynamic matrices");
}

ScoreResult evaluate_score(const ProbVector& f, const ScoreConfig& cfg) {
  if (cfg.matrix_kind == CostKind::Dynamic) {
    return {wasserstein_to_onehot(f, 0, cfg), 0};
  }
  if (cfg.evaluation == ScoreEvaluation::ClosedForm && cfg.matrix_kind == CostKind::Binary) {
    // min_k (1 - f[k]) is attained at the largest entry.
    const std::size_t best = f.argmax();
    return {1.0 - f[best], best};
  }
  ScoreResult best{wasserstein_to_onehot(f, 0, cfg), 0};
  for (std::size_t k = 1; k < f.size(); ++k) {
    const double w = wasserstein_to_onehot(f, k, cfg);
    if (w < best.score) best = {w, k};
  }
  return best;
}

double wood_score(const ProbVector& f, const ScoreConfig& cfg) {
  return evaluate_score(f, cfg).score;
}

std::size_t score_argmin_class(const ProbVector& f, const ScoreConfig& cfg) {
  return evaluate_score(f, cfg).argmin;
}

}  // namespace wood
