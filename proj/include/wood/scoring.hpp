#pragma once

#include <vector>

#include "wood/geometry.hpp"
#include "wood/model.hpp"

namespace wood {

/// WOOD score and minimizing class for each row of a softmax matrix.
std::vector<ScoreResult> score_rows(const Matrix& probs, const ScoreConfig& cfg,
                                    std::size_t threads = 1);

std::vector<double> scores_only(const std::vector<ScoreResult>& results);

/// Fraction of rows whose argmax equals the label.
double accuracy(const Matrix& probs, std::span<const std::size_t> labels);

}  // namespace wood
