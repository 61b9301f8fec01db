#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "wood/error.hpp"
#include "wood/loss.hpp"

namespace wood {
namespace {

using testing::max_abs;
using testing::max_abs_diff;
using testing::random_prob;
using testing::to_vector;

ScoreConfig closed(CostKind kind) { return {kind, ScoreEvaluation::ClosedForm, {}}; }

ScoreConfig sinkhorn(CostKind kind, double lambda) {
  ScoreConfig cfg{kind, ScoreEvaluation::Sinkhorn, {}};
  cfg.sinkhorn.lambda = lambda;
  cfg.sinkhorn.max_iter = 20000;
  cfg.sinkhorn.tol = 1e-12;
  return cfg;
}

TEST(WoodLoss, SingleInDSample) {
  BatchSlices b;
  b.ind.push_back({ProbVector::uniform(2), 0});
  const auto v = wood_loss(b, closed(CostKind::Dynamic));
  EXPECT_NEAR(v.total, 0.6931472, 1e-6);
  EXPECT_EQ(v.total, v.ce_term);
  EXPECT_EQ(v.ood_term, 0.0);
}

TEST(WoodLoss, SingleOodSample) {
  BatchSlices b;
  b.ood.push_back(ProbVector::uniform(10));
  const auto v = wood_loss(b, closed(CostKind::Dynamic));
  EXPECT_NEAR(v.total, -0.09, 1e-15);
  EXPECT_EQ(v.ce_term, 0.0);
}

TEST(WoodLoss, PerfectInDPrediction) {
  BatchSlices b;
  b.ind.push_back({ProbVector::one_hot(3, 2), 2});
  EXPECT_EQ(wood_loss(b, closed(CostKind::Dynamic)).total, 0.0);
}

TEST(WoodLoss, ClampAndLabelRange) {
  BatchSlices b;
  b.ind.push_back({ProbVector::one_hot(3, 0), 1});
  EXPECT_NEAR(wood_loss(b, closed(CostKind::Dynamic)).ce_term, -std::log(kProbFloor), 1e-9);
  b.ind[0].label = 3;
  EXPECT_THROW(wood_loss(b, closed(CostKind::Dynamic)), IndexError);
}

TEST(WoodLoss, DecompositionAndBetaZero) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    BatchSlices b;
    b.beta = trial % 5 == 0 ? 0.0 : 0.1 * trial;
    double ce = 0.0;
    for (int i = 0; i < 4; ++i) {
      const auto f = random_prob(rng, 4);
      b.ind.push_back({f, static_cast<std::size_t>(i)});
      ce += -std::log(f[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < 3; ++i) b.ood.push_back(random_prob(rng, 4));
    const auto v = wood_loss(b, closed(CostKind::Dynamic));
    EXPECT_EQ(v.total, v.ce_term - b.beta * v.ood_term);
    EXPECT_NEAR(v.ce_term, ce / 4.0, 1e-12);
    if (b.beta == 0.0) {
      EXPECT_NEAR(v.total, ce / 4.0, 1e-12);
    }
  }
}

TEST(WoodLoss, HigherOodScoreLowersTotal) {
  BatchSlices b;
  b.beta = 0.1;
  b.ood.push_back(ProbVector({0.8, 0.1, 0.1}));
  const double before = wood_loss(b, closed(CostKind::Dynamic)).total;
  b.ood[0] = ProbVector({0.6, 0.2, 0.2});
  EXPECT_LT(wood_loss(b, closed(CostKind::Dynamic)).total, before);
}

TEST(GradInd, Examples) {
  EXPECT_EQ(grad_ind(ProbVector::uniform(2), 0, 1), (std::vector<double>{-2.0, 0.0}));
  EXPECT_EQ(grad_ind(ProbVector::one_hot(2, 0), 0, 1), (std::vector<double>{-1.0, 0.0}));
  const auto g = grad_ind(ProbVector({0.25, 0.75}), 1, 2);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], -2.0 / 3.0, 1e-15);
  EXPECT_THROW(grad_ind(ProbVector::uniform(2), 2, 1), IndexError);
}

TEST(GradOod, Examples) {
  const auto zero = grad_ood(ProbVector::uniform(4), closed(CostKind::Dynamic), 1, 0.1);
  EXPECT_LT(max_abs(zero), 1e-17);
  const auto g = grad_ood(ProbVector::one_hot(2, 0), closed(CostKind::Dynamic), 1, 0.1);
  EXPECT_NEAR(g[0], 0.1, 1e-15);
  EXPECT_NEAR(g[1], -0.1, 1e-15);
  EXPECT_THROW(grad_ood(ProbVector::uniform(2), closed(CostKind::Dynamic), 0, 0.1), InputError);
}

TEST(GradOod, ClosedFormMatchesFiniteDifferences) {
  std::mt19937_64 rng(67);
  for (CostKind kind : {CostKind::Binary, CostKind::Dynamic}) {
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t k = 2 + static_cast<std::size_t>(trial % 5);
      const auto f = random_prob(rng, k, 0.01);
      const std::size_t n = 1 + static_cast<std::size_t>(trial % 3);
      const double beta = 0.1;
      const auto g = grad_ood(f, closed(kind), n, beta);
      auto fn = [&](const std::vector<double>& x) {
        return -beta * wood_score(ProbVector(x), closed(kind)) / static_cast<double>(n);
      };
      const auto fd = oracle::fd_gradient(fn, to_vector(f), 1e-6);
      ASSERT_LE(max_abs_diff(g, fd) / std::max(max_abs(fd), 1e-12), 1e-6) << "trial " << trial;
    }
  }
}

TEST(GradOod, SinkhornPathMatchesFiniteDifferences) {
  std::mt19937_64 rng(71);
  for (CostKind kind : {CostKind::Binary, CostKind::Dynamic}) {
    const ScoreConfig cfg = sinkhorn(kind, 10);
    for (int trial = 0; trial < 20; ++trial) {
      const auto f = random_prob(rng, 3, 0.05);
      const std::size_t k_star = score_argmin_class(f, cfg);
      const auto g = grad_ood(f, cfg, 1, 0.1);
      // Differentiate the entropic objective at the fixed minimizing class.
      auto fn = [&](const std::vector<double>& x) {
        const ProbVector p(x);
        return -0.1 * onehot_transport(p, k_star, kind, cfg.sinkhorn).regularized_value;
      };
      const auto fd = oracle::fd_gradient(fn, to_vector(f), 1e-5);
      ASSERT_LE(max_abs_diff(g, fd) / max_abs(fd), 1e-3) << "trial " << trial;
    }
  }
}

TEST(GradOod, NonConvergenceRaises) {
  ScoreConfig cfg = sinkhorn(CostKind::Dynamic, 50);
  cfg.sinkhorn.max_iter = 1;
  EXPECT_THROW(grad_ood(ProbVector({0.2, 0.3, 0.5}), cfg, 1, 0.1), NumericError);
}

TEST(BoundDiagnostics, Examples) {
  BatchSlices b;
  b.ind.push_back({ProbVector({0.5, 0.3, 0.2}), 0});
  const auto binary = bound_diagnostics(b, closed(CostKind::Binary));
  EXPECT_EQ(binary.alpha_m, 1.0);
  EXPECT_EQ(binary.m, 0.2);
  b.ind.clear();
  b.ood.push_back(ProbVector({0.7, 0.2, 0.1}));
  const auto dynamic = bound_diagnostics(b, closed(CostKind::Dynamic));
  EXPECT_EQ(dynamic.m, 1.0);
  EXPECT_NEAR(dynamic.alpha_m, 0.9, 1e-15);
}

}  // namespace
}  // namespace wood
