#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "wood/error.hpp"
#include "wood/loss.hpp"
#include "wood/model.hpp"

namespace wood {
namespace {

Matrix random_inputs(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return x;
}

TEST(Init, DeterministicUnderSeed) {
  const std::vector<std::size_t> dims{2, 4, 3};
  EXPECT_EQ(flatten_parameters(init_model(dims, 7)), flatten_parameters(init_model(dims, 7)));
  EXPECT_NE(flatten_parameters(init_model(dims, 7)), flatten_parameters(init_model(dims, 8)));
}

TEST(Init, ShapesAndScale) {
  const std::vector<std::size_t> dims{400, 300, 10};
  const auto m = init_model(dims, 1);
  ASSERT_EQ(m.layers.size(), 2u);
  EXPECT_EQ(m.layers[0].weight.rows(), 300);
  EXPECT_EQ(m.layers[0].weight.cols(), 400);
  EXPECT_EQ(m.layers[0].bias.size(), 300);
  EXPECT_EQ(m.layers[1].bias.squaredNorm(), 0.0);
  EXPECT_EQ(m.parameter_count(), 400u * 300u + 300u + 300u * 10u + 10u);
  const auto& w = m.layers[0].weight;
  const double var = w.array().square().mean();
  EXPECT_NEAR(var, 2.0 / 400.0, 0.05 * 2.0 / 400.0);
}

TEST(Init, MinimalAndInvalid) {
  const std::vector<std::size_t> minimal{5, 3};
  EXPECT_EQ(init_model(minimal, 1).layers.size(), 1u);
  EXPECT_THROW(init_model(std::vector<std::size_t>{}, 1), DimensionError);
  EXPECT_THROW(init_model(std::vector<std::size_t>{4}, 1), DimensionError);
  EXPECT_THROW(init_model(std::vector<std::size_t>{4, 0, 3}, 1), DimensionError);
}

TEST(Forward, ZeroParametersGiveUniform) {
  auto m = init_model(std::vector<std::size_t>{3, 5, 4}, 2);
  assign_parameters(m, std::vector<double>(m.parameter_count(), 0.0));
  const std::vector<double> x{1.0, -2.0, 3.0};
  const auto t = forward(m, x);
  for (Eigen::Index c = 0; c < 4; ++c) EXPECT_EQ(t.probs(0, c), 0.25);
}

TEST(Forward, StableSoftmax) {
  Matrix logits(2, 2);
  logits << 1000.0, 1000.0, -1000.0, 1000.0;
  const Matrix p = stable_softmax(logits);
  EXPECT_EQ(p(0, 0), 0.5);
  EXPECT_EQ(p(0, 1), 0.5);
  EXPECT_EQ(p(1, 1), 1.0);
  EXPECT_TRUE(p.allFinite());
}

TEST(Forward, ProbsOnSimplex) {
  std::mt19937_64 rng(3);
  const auto m = init_model(std::vector<std::size_t>{4, 16, 5}, 3);
  const auto t = forward(m, random_inputs(rng, 50, 4));
  for (Eigen::Index r = 0; r < 50; ++r) {
    EXPECT_NEAR(t.probs.row(r).sum(), 1.0, 1e-9);
    EXPECT_GE(t.probs.row(r).minCoeff(), 0.0);
    EXPECT_NO_THROW(t.prob_vector(static_cast<std::size_t>(r)));
  }
}

TEST(Forward, InputErrors) {
  const auto m = init_model(std::vector<std::size_t>{2, 3}, 1);
  EXPECT_THROW(forward(m, std::vector<double>{1.0}), DimensionError);
  EXPECT_THROW(forward(m, std::vector<double>{1.0, NAN}), InputError);
  EXPECT_THROW(forward(m, std::vector<double>{INFINITY, 0.0}), InputError);
}

TEST(Backward, ConstantAndZeroGradientsVanish) {
  std::mt19937_64 rng(5);
  const auto m = init_model(std::vector<std::size_t>{3, 8, 4}, 5);
  const auto t = forward(m, random_inputs(rng, 6, 3));
  for (double c : {0.0, 2.5}) {
    const Matrix g = Matrix::Constant(6, 4, c);
    for (double x : flatten_grads(backward(m, t, g))) ASSERT_EQ(x, 0.0);
  }
}

TEST(Backward, GaugeInvariance) {
  std::mt19937_64 rng(7);
  const auto m = init_model(std::vector<std::size_t>{3, 8, 4}, 7);
  const auto t = forward(m, random_inputs(rng, 5, 3));
  const Matrix g = random_inputs(rng, 5, 4);
  const auto base = flatten_grads(backward(m, t, g));
  for (double c : {-3.0, 0.7, 100.0}) {
    const Matrix shifted = (g.array() + c).matrix();
    const auto other = flatten_grads(backward(m, t, shifted));
    for (std::size_t i = 0; i < base.size(); ++i) {
      ASSERT_NEAR(other[i], base[i], 1e-12 * std::max(1.0, std::abs(base[i])));
    }
  }
}

TEST(Backward, ShapeMismatch) {
  const auto m = init_model(std::vector<std::size_t>{2, 3}, 1);
  const auto t = forward(m, std::vector<double>{0.1, 0.2});
  EXPECT_THROW(backward(m, t, std::vector<double>{1.0, 2.0}), DimensionError);
  EXPECT_THROW(backward(m, t, Matrix::Zero(2, 3)), DimensionError);
}

// Full WOOD loss through the network, every parameter perturbed by ±1e-5.
TEST(Backward, EndToEndMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 3);
    auto m = init_model(std::vector<std::size_t>{3, 6, 5, k}, 100 + static_cast<std::uint64_t>(trial));
    // Zero biases can leave a whole layer at exactly 0, on the ReLU kink.
    auto jittered = flatten_parameters(m);
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (double& p : jittered) p += jitter(rng);
    assign_parameters(m, jittered);
    const std::size_t n_ind = 3;
    const std::size_t n_ood = 2;
    const Matrix x = random_inputs(rng, static_cast<Eigen::Index>(n_ind + n_ood), 3);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n_ind; ++i) labels.push_back((i + static_cast<std::size_t>(trial)) % k);
    const ScoreConfig cfg{trial % 2 == 0 ? CostKind::Dynamic : CostKind::Binary,
                          ScoreEvaluation::ClosedForm, {}};
    const double beta = 0.5;

    auto loss = [&](const MlpModel& model) {
      const auto t = forward(model, x);
      BatchSlices b;
      b.beta = beta;
      for (std::size_t i = 0; i < n_ind; ++i) b.ind.push_back({t.prob_vector(i), labels[i]});
      for (std::size_t i = 0; i < n_ood; ++i) b.ood.push_back(t.prob_vector(n_ind + i));
      return wood_loss(b, cfg).total;
    };

    const auto t = forward(m, x);
    Matrix g(x.rows(), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n_ind + n_ood; ++i) {
      const auto row = i < n_ind ? grad_ind(t.prob_vector(i), labels[i], n_ind)
                                 : grad_ood(t.prob_vector(i), cfg, n_ood, beta);
      for (std::size_t c = 0; c < k; ++c) g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    }
    const auto analytic = flatten_grads(backward(m, t, g));
    const auto params = flatten_parameters(m);

    double err = 0.0;
    double scale = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto shifted = params;
      MlpModel plus = m;
      MlpModel minus = m;
      shifted[p] = params[p] + 1e-5;
      assign_parameters(plus, shifted);
      shifted[p] = params[p] - 1e-5;
      assign_parameters(minus, shifted);
      const double fd = (loss(plus) - loss(minus)) / 2e-5;
      err = std::max(err, std::abs(fd - analytic[p]));
      scale = std::max(scale, std::abs(fd));
    }
    ASSERT_LE(err / scale, 1e-4) << "trial " << trial;
  }
}

TEST(Parameters, FlattenAssignRoundTrip) {
  auto m = init_model(std::vector<std::size_t>{3, 4, 2}, 9);
  auto flat = flatten_parameters(m);
  for (double& x : flat) x *= 2.0;
  assign_parameters(m, flat);
  EXPECT_EQ(flatten_parameters(m), flat);
  flat.pop_back();
  EXPECT_THROW(assign_parameters(m, flat), DimensionError);
}

}  // namespace
}  // namespace wood
