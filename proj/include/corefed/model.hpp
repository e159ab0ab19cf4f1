#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "corefed/datasets.hpp"
#include "corefed/matrix.hpp"
#include "corefed/rng.hpp"

namespace corefed {

enum class Activation { relu };

// Feed-forward network: input -> hidden_dims... -> num_classes. Everything up
// to the last hidden layer is the feature extractor; its post-activation
// output is the embedding. The final linear layer is the predictor.
struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::relu;

  std::size_t embedding_dim() const { return hidden_dims.back(); }
  std::size_t layer_count() const { return hidden_dims.size() + 1; }
  std::size_t parameter_count() const;
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

// Offsets of one dense layer inside a flattened parameter vector. Layers are
// laid out in order; within a layer the fan_out x fan_in weight block comes
// first (row-major), then the fan_out biases.
struct LayerShape {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  std::size_t size() const { return (fan_in + 1) * fan_out; }
};

std::vector<LayerShape> layer_shapes(const ModelSpec& spec);

struct ParameterVector {
  std::vector<double> values;

  ParameterVector() = default;
  explicit ParameterVector(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit ParameterVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  auto begin() const { return values.begin(); }
  auto end() const { return values.end(); }
  std::span<const double> span() const { return values; }

  bool operator==(const ParameterVector&) const = default;
};

struct LayerParams {
  Matrix weights;  // fan_out x fan_in
  std::vector<double> bias;
};

std::vector<LayerParams> unflatten(const ParameterVector& params, const ModelSpec& spec);
ParameterVector flatten(std::span<const LayerParams> layers);

struct Batch {
  Matrix inputs;  // batch_size x input_dim
  std::vector<int> labels;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> rows);

struct ForwardResult {
  Matrix embeddings;  // batch_size x embedding_dim
  Matrix logits;      // batch_size x num_classes
};

ForwardResult forward(const ParameterVector& model, const ModelSpec& spec, const Matrix& inputs);
ForwardResult forward(const ParameterVector& model, const ModelSpec& spec, const Batch& batch);

/// Mean softmax cross-entropy.
double loss(const Matrix& logits, std::span<const int> labels);

/// Gradient of the mean batch loss with respect to every parameter.
ParameterVector backward(const ParameterVector& model, const ModelSpec& spec, const Batch& batch);

struct LossAndGradient {
  double loss = 0.0;
  ParameterVector gradient;
};
LossAndGradient loss_and_gradient(const ParameterVector& model, const ModelSpec& spec,
                                  const Batch& batch);

ParameterVector sgd_step(const ParameterVector& model, const ParameterVector& grad, double lr);

/// Mini-batch SGD for `epochs` passes over `train`, reshuffled each epoch from
/// `rng`. The trailing partial batch is kept. Throws ClientSkipped on empty data.
ParameterVector local_train(const ParameterVector& model, const ModelSpec& spec,
                            const Dataset& train, int epochs, std::size_t batch_size,
                            double lr, Rng& rng);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, biases included.
ParameterVector init_parameters(const ModelSpec& spec, Rng& rng);

/// Index of the largest logit in each row; ties go to the lowest index.
std::vector<int> predict(const ParameterVector& model, const ModelSpec& spec, const Matrix& inputs);

}  // namespace corefed
