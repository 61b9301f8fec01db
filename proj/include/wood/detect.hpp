#pragma once

// Threshold calibration, the OOD detector, and FNR/AUROC evaluation.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wood/geometry.hpp"

namespace wood {

struct Detector {
  double epsilon = 0.0;
  ScoreConfig score{};
  double tnr_target = 0.95;
};

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;

  double bin_center(std::size_t bin) const;
};

struct EvalReport {
  double epsilon = 0.0;
  double tnr_target = 0.95;
  double tnr = 0.0;
  double fnr_at_tnr = 0.0;
  double auroc = 0.0;
  std::size_t n_ind = 0;
  std::size_t n_ood = 0;
  /// Exact counts behind tnr and fnr_at_tnr.
  std::size_t ind_kept = 0;
  std::size_t ood_missed = 0;
  Histogram hist_ind;
  Histogram hist_ood;
};

inline constexpr std::size_t kHistogramBins = 50;

/// ε such that at least `tnr_target` of the calibration scores are <= ε:
/// the linearly interpolated quantile, raised to the order statistic
/// x_(ceil(q n)) when interpolation would fall short of the target.
Detector calibrate(std::span<const double> ind_scores, double tnr_target,
                   const ScoreConfig& score = {});

/// 1 (OOD) iff score > ε.
int classify(const Detector& det, double score);

/// AUROC as the Mann-Whitney statistic with midranks for ties.
double auroc(std::span<const double> ind_scores, std::span<const double> ood_scores);

/// Calibrates on `calibration_scores` and reports TNR on them, FNR on the OOD
/// scores, AUROC of test InD vs OOD and 50-bin histograms over the pooled
/// range.
EvalReport evaluate(std::span<const double> calibration_scores,
                    std::span<const double> ind_scores, std::span<const double> ood_scores,
                    double tnr_target);
/// Calibrates on the InD scores themselves.
EvalReport evaluate(std::span<const double> ind_scores, std::span<const double> ood_scores,
                    double tnr_target);

/// 1 - max f: the max-softmax comparison score, oriented like the WOOD score.
double max_softmax_score(const ProbVector& f);

Histogram histogram(std::span<const double> scores, double lo, double hi,
                    std::size_t bins = kHistogramBins);

/// Plain-text report: `key: value` metric lines followed by the histograms.
std::string format_report(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);
/// Two columns: bin_center,count.
void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist);

}  // namespace wood
