#include "wood/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "wood/error.hpp"

namespace wood {

namespace {

void require_scores(std::span<const double> scores, const char* what) {
  if (scores.empty()) throw InputError(std::string(what) + " score list is empty");
  for (double s : scores) {
    if (std::isnan(s)) throw InputError(std::string(what) + " scores contain NaN");
  }
}

void require_target(double tnr_target) {
  if (!(tnr_target > 0.0 && tnr_target < 1.0)) {
    throw ConfigError("TNR target must lie in (0, 1), got " + std::to_string(tnr_target));
  }
}

std::size_t count_at_most(std::span<const double> scores, double epsilon) {
  return static_cast<std::size_t>(
      std::count_if(scores.begin(), scores.end(), [&](double s) { return s <= epsilon; }));
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

double Histogram::bin_center(std::size_t bin) const {
  const double width = (hi - lo) / static_cast<double>(counts.size());
  return lo + (static_cast<double>(bin) + 0.5) * width;
}

Detector calibrate(std::span<const double> ind_scores, double tnr_target, const ScoreConfig& score) {
  require_scores(ind_scores, "calibration");
  require_target(tnr_target);
  std::vector<double> sorted(ind_scores.begin(), ind_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  const double pos = tnr_target * static_cast<double>(n - 1);
  const auto below = static_cast<std::size_t>(std::floor(pos));
  const std::size_t above = std::min(below + 1, n - 1);
  const double frac = pos - static_cast<double>(below);
  double epsilon = sorted[below] + frac * (sorted[above] - sorted[below]);

  // Smallest order statistic that keeps at least the target fraction.
  const double needed = std::ceil(tnr_target * static_cast<double>(n) - 1e-9);
  const auto rank = static_cast<std::size_t>(std::clamp(needed, 1.0, static_cast<double>(n)));
  epsilon = std::max(epsilon, sorted[rank - 1]);

  return Detector{epsilon, score, tnr_target};
}

int classify(const Detector& det, double score) {
  if (std::isnan(score)) throw InputError("cannot classify a NaN score");
  return score > det.epsilon ? 1 : 0;
}

double auroc(std::span<const double> ind_scores, std::span<const double> ood_scores) {
  require_scores(ind_scores, "InD");
  require_scores(ood_scores, "OOD");
  struct Tagged {
    double score;
    bool ood;
  };
  std::vector<Tagged> pooled;
  pooled.reserve(ind_scores.size() + ood_scores.size());
  for (double s : ind_scores) pooled.push_back({s, false});
  for (double s : ood_scores) pooled.push_back({s, true});
  std::sort(pooled.begin(), pooled.end(),
            [](const Tagged& a, const Tagged& b) { return a.score < b.score; });

  // Midranks are multiples of 1/2, so the rank sum is exact in double.
  double ood_rank_sum = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    std::size_t ood_in_tie = 0;
    while (j < pooled.size() && pooled[j].score == pooled[i].score) {
      if (pooled[j].ood) ++ood_in_tie;
      ++j;
    }
    const double midrank = static_cast<double>(i + 1 + j) / 2.0;
    ood_rank_sum += midrank * static_cast<double>(ood_in_tie);
    i = j;
  }
  const auto n_ood = static_cast<double>(ood_scores.size());
  const auto n_ind = static_cast<double>(ind_scores.size());
  const double u = ood_rank_sum - n_ood * (n_ood + 1.0) / 2.0;
  return u / (n_ind * n_ood);
}

Histogram histogram(std::span<const double> scores, double lo, double hi, std::size_t bins) {
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  const double width = hi - lo;
  for (double s : scores) {
    std::size_t bin = 0;
    if (width > 0.0) {
      const double t = (s - lo) / width * static_cast<double>(bins);
      bin = static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(bins - 1)));
    }
    ++h.counts[bin];
  }
  return h;
}

EvalReport evaluate(std::span<const double> calibration_scores,
                    std::span<const double> ind_scores, std::span<const double> ood_scores,
                    double tnr_target) {
  require_scores(ind_scores, "InD");
  require_scores(ood_scores, "OOD");
  const Detector det = calibrate(calibration_scores, tnr_target);

  EvalReport r;
  r.epsilon = det.epsilon;
  r.tnr_target = tnr_target;
  r.n_ind = ind_scores.size();
  r.n_ood = ood_scores.size();
  r.ind_kept = count_at_most(ind_scores, det.epsilon);
  r.ood_missed = count_at_most(ood_scores, det.epsilon);
  r.tnr = static_cast<double>(r.ind_kept) / static_cast<double>(r.n_ind);
  r.fnr_at_tnr = static_cast<double>(r.ood_missed) / static_cast<double>(r.n_ood);
  r.auroc = auroc(ind_scores, ood_scores);

  const auto [ind_lo, ind_hi] = std::minmax_element(ind_scores.begin(), ind_scores.end());
  const auto [ood_lo, ood_hi] = std::minmax_element(ood_scores.begin(), ood_scores.end());
  const double lo = std::min(*ind_lo, *ood_lo);
  const double hi = std::max(*ind_hi, *ood_hi);
  r.hist_ind = histogram(ind_scores, lo, hi);
  r.hist_ood = histogram(ood_scores, lo, hi);
  return r;
}

EvalReport evaluate(std::span<const double> ind_scores, std::span<const double> ood_scores,
                    double tnr_target) {
  return evaluate(ind_scores, ind_scores, ood_scores, tnr_target);
}

double max_softmax_score(const ProbVector& f) { return 1.0 - f.max(); }

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << "tnr_target: " << fmt(r.tnr_target) << '\n'
     << "epsilon: " << fmt(r.epsilon) << '\n'
     << "tnr: " << fmt(r.tnr) << '\n'
     << "fnr_at_tnr: " << fmt(r.fnr_at_tnr) << '\n'
     << "auroc: " << fmt(r.auroc) << '\n'
     << "n_ind: " << r.n_ind << '\n'
     << "n_ood: " << r.n_ood << '\n'
     << "ind_kept: " << r.ind_kept << '\n'
     << "ood_missed: " << r.ood_missed << '\n'
     << "hist_lo: " << fmt(r.hist_ind.lo) << '\n'
     << "hist_hi: " << fmt(r.hist_ind.hi) << '\n';
  auto counts = [&](const char* key, const Histogram& h) {
    os << key << ':';
    for (std::size_t c : h.counts) os << ' ' << c;
    os << '\n';
  };
  counts("hist_ind", r.hist_ind);
  counts("hist_ood", r.hist_ood);
  return os.str();
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << format_report(report);
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "bin_center,count\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    out << fmt(hist.bin_center(b)) << ',' << hist.counts[b] << '\n';
  }
}

}  // namespace wood
