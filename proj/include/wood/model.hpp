#pragma once

// Fully connected ReLU classifier with a softmax head and hand-written
// forward/backward passes. Samples are rows.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wood/prob_vector.hpp"

namespace wood {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { ReLU };

struct DenseLayer {
  Matrix weight;  // out × in
  Vector bias;    // out
};

struct MlpModel {
  std::vector<std::size_t> layer_dims;
  std::vector<DenseLayer> layers;
  Activation activation = Activation::ReLU;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t num_classes() const { return layer_dims.back(); }
  std::size_t parameter_count() const;
};

/// Per-layer parameter gradients, shaped like the model.
struct ParameterGrads {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  static ParameterGrads zeros_like(const MlpModel& model);
};

/// Everything backward needs. `activations[0]` is the input batch; the last
/// pre-activation is the logits.
struct ForwardTrace {
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> activations;
  Matrix probs;

  const Matrix& logits() const { return pre_activations.back(); }
  std::size_t batch_size() const { return static_cast<std::size_t>(probs.rows()); }
  ProbVector prob_vector(std::size_t row) const;
};

/// He-normal weights (std sqrt(2 / fan_in)), zero biases.
MlpModel init_model(std::span<const std::size_t> layer_dims, std::uint64_t seed);

/// Row-wise softmax with max subtraction.
Matrix stable_softmax(const Matrix& logits);

ForwardTrace forward(const MlpModel& model, const Matrix& inputs);
ForwardTrace forward(const MlpModel& model, std::span<const double> x);

/// Backpropagates dL/dprobs (one row per sample) to parameter gradients,
/// summed over the batch.
ParameterGrads backward(const MlpModel& model, const ForwardTrace& trace,
                        const Matrix& grad_probs);
ParameterGrads backward(const MlpModel& model, const ForwardTrace& trace,
                        std::span<const double> grad_probs);

/// Parameters flattened layer by layer: weights row-major, then biases.
std::vector<double> flatten_parameters(const MlpModel& model);
void assign_parameters(MlpModel& model, std::span<const double> flat);
std::vector<double> flatten_grads(const ParameterGrads& grads);

}  // namespace wood
