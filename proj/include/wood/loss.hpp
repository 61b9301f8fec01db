#pragma once

#include <cstddef>
#include <vector>

#include "wood/geometry.hpp"
#include "wood/prob_vector.hpp"

namespace wood {

/// Floor applied to probabilities before taking logs.
inline constexpr double kProbFloor = 1e-12;

struct LabeledProb {
  ProbVector probs;
  std::size_t label = 0;
};

/// Softmax outputs of one mixed batch.
struct BatchSlices {
  std::vector<LabeledProb> ind;
  std::vector<ProbVector> ood;
  double beta = 0.1;
};

struct LossValue {
  double total = 0.0;
  double ce_term = 0.0;
  /// Mean OOD score, before weighting by beta.
  double ood_term = 0.0;
};

/// Mean cross-entropy over the InD slice minus beta times the mean OOD score.
/// An empty slice contributes zero.
LossValue wood_loss(const BatchSlices& batch, const ScoreConfig& cfg);

/// d/df of -log(f[k]) / n_ind.
std::vector<double> grad_ind(const ProbVector& f, std::size_t k, std::size_t n_ind);

/// Centered d/df of -beta * W(f, y^{k*}) / n_ood at the minimizing class k*.
std::vector<double> grad_ood(const ProbVector& f, const ScoreConfig& cfg, std::size_t n_ood,
                             double beta);

/// Constants of the generalization bound, reported for logging.
struct BoundDiagnostics {
  double alpha_m = 0.0;  ///< largest cost entry in play
  double m = 1.0;        ///< smallest clamped InD probability
};

BoundDiagnostics bound_diagnostics(const BatchSlices& batch, const ScoreConfig& cfg);

}  // namespace wood
