#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "wood/detect.hpp"
#include "wood/error.hpp"

namespace wood {
namespace {

double achieved_tnr(const std::vector<double>& scores, double epsilon) {
  const auto kept = std::count_if(scores.begin(), scores.end(), [&](double s) { return s <= epsilon; });
  return static_cast<double>(kept) / static_cast<double>(scores.size());
}

TEST(Calibrate, HundredScores) {
  std::vector<double> s(100);
  std::iota(s.begin(), s.end(), 1.0);
  const auto det = calibrate(s, 0.95);
  EXPECT_NEAR(det.epsilon, 95.05, 1e-12);
  EXPECT_GE(achieved_tnr(s, det.epsilon), 0.95);
  EXPECT_EQ(det.tnr_target, 0.95);
}

TEST(Calibrate, ConstantAndSingle) {
  const std::vector<double> same(7, 0.4);
  EXPECT_EQ(calibrate(same, 0.95).epsilon, 0.4);
  EXPECT_EQ(achieved_tnr(same, 0.4), 1.0);
  EXPECT_EQ(calibrate(std::vector<double>{0.3}, 0.95).epsilon, 0.3);
}

TEST(Calibrate, Errors) {
  EXPECT_THROW(calibrate(std::vector<double>{}, 0.95), InputError);
  EXPECT_THROW(calibrate(std::vector<double>{1.0}, 1.0), ConfigError);
  EXPECT_THROW(calibrate(std::vector<double>{1.0}, 0.0), ConfigError);
  EXPECT_THROW(calibrate(std::vector<double>{1.0, NAN}, 0.5), InputError);
}

TEST(Calibrate, TnrWithinOneSample) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 200);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(static_cast<std::size_t>(len(rng)));
    for (double& x : s) x = trial % 3 == 0 ? std::round(normal(rng) * 3.0) : normal(rng);
    for (double target : {0.5, 0.9, 0.95, 0.99}) {
      const double tnr = achieved_tnr(s, calibrate(s, target).epsilon);
      ASSERT_GE(tnr, target);
      if (trial % 3 != 0) {
        ASSERT_LE(tnr, target + 1.0 / static_cast<double>(s.size()));
      }
    }
  }
}

TEST(Classify, StrictThreshold) {
  Detector det;
  det.epsilon = 0.5;
  EXPECT_EQ(classify(det, 0.3), 0);
  EXPECT_EQ(classify(det, 0.7), 1);
  EXPECT_EQ(classify(det, 0.5), 0);
  EXPECT_THROW(classify(det, NAN), InputError);
}

TEST(Evaluate, Examples) {
  const auto perfect = evaluate(std::vector<double>{0.1, 0.2}, std::vector<double>{0.8, 0.9}, 0.95);
  EXPECT_EQ(perfect.auroc, 1.0);
  EXPECT_EQ(perfect.fnr_at_tnr, 0.0);
  EXPECT_EQ(perfect.tnr, 1.0);

  const std::vector<double> same{0.3, 0.1, 0.7, 0.7};
  EXPECT_EQ(evaluate(same, same, 0.95).auroc, 0.5);

  const auto partial = evaluate(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2.5, 5}, 0.95);
  EXPECT_EQ(partial.auroc, 0.75);
  EXPECT_EQ(partial.n_ind, 4u);
  EXPECT_EQ(partial.n_ood, 2u);

  EXPECT_THROW(evaluate(std::vector<double>{}, std::vector<double>{1.0}, 0.95), InputError);
  EXPECT_THROW(evaluate(std::vector<double>{1.0}, std::vector<double>{}, 0.95), InputError);
}

TEST(Evaluate, HistogramsShareRange) {
  const auto r = evaluate(std::vector<double>{0.0, 0.1, 0.2}, std::vector<double>{0.5, 1.0}, 0.95);
  ASSERT_EQ(r.hist_ind.counts.size(), kHistogramBins);
  EXPECT_EQ(r.hist_ind.lo, r.hist_ood.lo);
  EXPECT_EQ(r.hist_ind.hi, 1.0);
  EXPECT_EQ(std::accumulate(r.hist_ind.counts.begin(), r.hist_ind.counts.end(), std::size_t{0}), 3u);
  EXPECT_EQ(r.hist_ood.counts.back(), 1u);
  EXPECT_EQ(r.hist_ind.counts.front(), 1u);
}

TEST(Auroc, MatchesPairwiseOracle) {
  std::mt19937_64 rng(19);
  std::uniform_int_distribution<int> len(1, 200);
  std::uniform_int_distribution<int> coarse(0, 20);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> ind(static_cast<std::size_t>(len(rng)));
    std::vector<double> ood(static_cast<std::size_t>(len(rng)));
    const bool ties = trial % 2 == 0;
    for (double& x : ind) x = ties ? coarse(rng) : normal(rng);
    for (double& x : ood) x = ties ? coarse(rng) + 3 : normal(rng) + 1.0;
    ASSERT_EQ(auroc(ind, ood), oracle::pairwise_auroc(ind, ood));
  }
}

TEST(Auroc, MonotoneTransformInvariance) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> ind(60);
  std::vector<double> ood(40);
  for (double& x : ind) x = normal(rng);
  for (double& x : ood) x = normal(rng) + 0.8;
  auto warp = [](std::vector<double> v) {
    for (double& x : v) x = std::exp(2.0 * x) + 3.0;
    return v;
  };
  EXPECT_EQ(auroc(ind, ood), auroc(warp(ind), warp(ood)));
  const Detector a = calibrate(ind, 0.9);
  const Detector b = calibrate(warp(ind), 0.9);
  const auto wood = warp(ood);
  for (std::size_t i = 0; i < ood.size(); ++i) {
    EXPECT_EQ(classify(a, ood[i]), classify(b, wood[i]));
  }
}

TEST(MaxSoftmax, Examples) {
  EXPECT_EQ(max_softmax_score(ProbVector::one_hot(4, 1)), 0.0);
  EXPECT_NEAR(max_softmax_score(ProbVector::uniform(10)), 0.9, 1e-15);
  EXPECT_EQ(max_softmax_score(ProbVector({0.5, 0.3, 0.2})), 0.5);
}

TEST(Report, TextAndCsv) {
  const auto r = evaluate(std::vector<double>{0.1, 0.2, 0.3}, std::vector<double>{0.8, 0.9}, 0.95);
  const std::string text = format_report(r);
  EXPECT_NE(text.find("auroc: 1\n"), std::string::npos);
  EXPECT_NE(text.find("fnr_at_tnr: 0\n"), std::string::npos);
  EXPECT_NE(text.find("hist_ood:"), std::string::npos);

  const auto path = std::filesystem::temp_directory_path() / "wood_detect_hist.csv";
  write_histogram_csv(path, r.hist_ood);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "bin_center,count");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, kHistogramBins);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace wood
