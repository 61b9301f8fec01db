#include "wood/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "wood/error.hpp"

namespace wood {

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

ParameterGrads ParameterGrads::zeros_like(const MlpModel& model) {
  ParameterGrads g;
  for (const auto& layer : model.layers) {
    g.weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(Vector::Zero(layer.bias.size()));
  }
  return g;
}

ProbVector ForwardTrace::prob_vector(std::size_t row) const {
  const auto r = probs.row(static_cast<Eigen::Index>(row));
  return ProbVector(std::vector<double>(r.begin(), r.end()));
}

MlpModel init_model(std::span<const std::size_t> layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2) {
    throw DimensionError("model needs at least input and output widths, got " +
                         std::to_string(layer_dims.size()) + " dims");
  }
  for (std::size_t d : layer_dims) {
    if (d == 0) throw DimensionError("layer widths must be positive");
  }
  if (layer_dims.back() < 2) throw DimensionError("output layer needs K >= 2");

  MlpModel model;
  model.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(layer_dims[l]);
    const auto fan_out = static_cast<Eigen::Index>(layer_dims[l + 1]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

Matrix stable_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double hi = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      out(r, c) = std::exp(logits(r, c) - hi);
      sum += out(r, c);
    }
    out.row(r) /= sum;
  }
  return out;
}

ForwardTrace forward(const MlpModel& model, const Matrix& inputs) {
  if (inputs.cols() != static_cast<Eigen::Index>(model.input_dim())) {
    throw DimensionError("input has " + std::to_string(inputs.cols()) + " features, model expects " +
                         std::to_string(model.input_dim()));
  }
  if (!inputs.allFinite()) throw InputError("input features contain NaN or Inf");

  ForwardTrace trace;
  trace.activations.push_back(inputs);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Matrix z = trace.activations.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    const bool hidden = l + 1 < model.layers.size();
    if (hidden) trace.activations.push_back(z.cwiseMax(0.0));
    trace.pre_activations.push_back(std::move(z));
  }
  trace.probs = stable_softmax(trace.logits());
  return trace;
}

ForwardTrace forward(const MlpModel& model, std::span<const double> x) {
  Matrix row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
  return forward(model, row);
}

ParameterGrads backward(const MlpModel& model, const ForwardTrace& trace,
                        const Matrix& grad_probs) {
  const Matrix& probs = trace.probs;
  if (grad_probs.rows() != probs.rows() || grad_probs.cols() != probs.cols()) {
    throw DimensionError("grad_probs is " + std::to_string(grad_probs.rows()) + "x" +
                         std::to_string(grad_probs.cols()) + ", trace probs are " +
                         std::to_string(probs.rows()) + "x" + std::to_string(probs.cols()));
  }
  if (trace.pre_activations.size() != model.layers.size()) {
    throw DimensionError("trace does not belong to this model");
  }

  // Softmax Jacobian in pairwise-difference form: constants in g cancel
  // exactly, not just up to rounding.
  Matrix delta(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (Eigen::Index i = 0; i < probs.cols(); ++i) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        acc += probs(r, j) * (grad_probs(r, i) - grad_probs(r, j));
      }
      delta(r, i) = probs(r, i) * acc;
    }
  }

  ParameterGrads grads = ParameterGrads::zeros_like(model);
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    grads.weight[l] = delta.transpose() * trace.activations[l];
    grads.bias[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix upstream = delta * model.layers[l].weight;
    const Matrix& z = trace.pre_activations[l - 1];
    delta = upstream.array() * (z.array() > 0.0).cast<double>();
  }
  return grads;
}

ParameterGrads backward(const MlpModel& model, const ForwardTrace& trace,
                        std::span<const double> grad_probs) {
  Matrix g(1, static_cast<Eigen::Index>(grad_probs.size()));
  for (std::size_t i = 0; i < grad_probs.size(); ++i) g(0, static_cast<Eigen::Index>(i)) = grad_probs[i];
  return backward(model, trace, g);
}

std::vector<double> flatten_parameters(const MlpModel& model) {
  std::vector<double> flat;
  flat.reserve(model.parameter_count());
  for (const auto& layer : model.layers) {
    flat.insert(flat.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
    flat.insert(flat.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
  }
  return flat;
}

void assign_parameters(MlpModel& model, std::span<const double> flat) {
  if (flat.size() != model.parameter_count()) {
    throw DimensionError("expected " + std::to_string(model.parameter_count()) +
                         " parameters, got " + std::to_string(flat.size()));
  }
  std::size_t pos = 0;
  for (auto& layer : model.layers) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = flat[pos++];
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = flat[pos++];
  }
}

std::vector<double> flatten_grads(const ParameterGrads& grads) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < grads.weight.size(); ++l) {
    flat.insert(flat.end(), grads.weight[l].data(), grads.weight[l].data() + grads.weight[l].size());
    flat.insert(flat.end(), grads.bias[l].data(), grads.bias[l].data() + grads.bias[l].size());
  }
  return flat;
}

}  // namespace wood
