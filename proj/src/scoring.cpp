#include "wood/scoring.hpp"

#include <cstdlib>
#include <string>

#include "wood/error.hpp"
#include "wood/parallel.hpp"

namespace wood {

std::size_t worker_threads() {
  if (const char* env = std::getenv("WOOD_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0') throw ConfigError("WOOD_THREADS must be a non-negative integer");
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<ScoreResult> score_rows(const Matrix& probs, const ScoreConfig& cfg,
                                    std::size_t threads) {
  std::vector<ScoreResult> out(static_cast<std::size_t>(probs.rows()));
  parallel_for(out.size(), threads, [&](std::size_t i) {
    const auto row = probs.row(static_cast<Eigen::Index>(i));
    out[i] = evaluate_score(ProbVector(std::vector<double>(row.begin(), row.end())), cfg);
  });
  return out;
}

std::vector<double> scores_only(const std::vector<ScoreResult>& results) {
  std::vector<double> s;
  s.reserve(results.size());
  for (const auto& r : results) s.push_back(r.score);
  return s;
}

double accuracy(const Matrix& probs, std::span<const std::size_t> labels) {
  if (labels.size() != static_cast<std::size_t>(probs.rows())) {
    throw DimensionError("one label per row required");
  }
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Eigen::Index best = 0;
    probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    if (static_cast<std::size_t>(best) == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace wood
