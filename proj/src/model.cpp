#include "corefed/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "corefed/error.hpp"

namespace corefed {

namespace {

// Post-activation outputs of every layer; acts[0] is the input itself and
// acts.back() holds the logits.
struct Trace {
  std::vector<Matrix> acts;
};

void check_inputs(const ModelSpec& spec, const ParameterVector& model, const Matrix& inputs) {
  if (model.size() != spec.parameter_count()) {
    throw ConfigError("parameter vector has " + std::to_string(model.size()) +
                      " entries, model spec expects " + std::to_string(spec.parameter_count()));
  }
  if (inputs.cols() != spec.input_dim) {
    throw ConfigError("batch input width " + std::to_string(inputs.cols()) +
                      " does not match model input_dim " + std::to_string(spec.input_dim));
  }
}

void check_labels(const ModelSpec& spec, const Batch& batch) {
  if (batch.labels.size() != batch.inputs.rows()) {
    throw ConfigError("batch has " + std::to_string(batch.inputs.rows()) + " rows but " +
                      std::to_string(batch.labels.size()) + " labels");
  }
  if (batch.labels.empty()) throw ConfigError("batch must contain at least one sample");
  for (int y : batch.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes) {
      throw ConfigError("label " + std::to_string(y) + " outside [0, num_classes)");
    }
  }
}

Trace run_forward(const ParameterVector& model, const ModelSpec& spec, const Matrix& inputs) {
  check_inputs(spec, model, inputs);
  const auto shapes = layer_shapes(spec);
  const std::size_t batch = inputs.rows();
  Trace trace;
  trace.acts.reserve(shapes.size() + 1);
  trace.acts.push_back(inputs);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    const Matrix& in = trace.acts.back();
    Matrix out(batch, s.fan_out);
    const double* w = model.values.data() + s.weight_offset;
    const double* b = model.values.data() + s.bias_offset;
    const bool hidden = l + 1 < shapes.size();
    for (std::size_t r = 0; r < batch; ++r) {
      const double* x = in.row(r).data();
      double* y = out.row(r).data();
      for (std::size_t o = 0; o < s.fan_out; ++o) {
        const double* wo = w + o * s.fan_in;
        double acc = b[o];
        for (std::size_t i = 0; i < s.fan_in; ++i) acc += wo[i] * x[i];
        y[o] = hidden ? std::max(acc, 0.0) : acc;
      }
    }
    trace.acts.push_back(std::move(out));
  }
  return trace;
}

// Row-wise softmax, max-shifted.
Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto out = p.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - m);
      z += out[c];
    }
    for (double& v : out) v /= z;
  }
  return p;
}

}  // namespace

std::size_t ModelSpec::parameter_count() const {
  std::size_t total = 0;
  std::size_t fan_in = input_dim;
  for (std::size_t h : hidden_dims) {
    total += (fan_in + 1) * h;
    fan_in = h;
  }
  return total + (fan_in + 1) * num_classes;
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw ConfigError("model input_dim must be positive");
  if (num_classes == 0) throw ConfigError("model num_classes must be positive");
  if (hidden_dims.empty()) throw ConfigError("model hidden_dims must not be empty");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("model hidden_dims entries must be positive");
  }
}

std::vector<LayerShape> layer_shapes(const ModelSpec& spec) {
  spec.validate();
  std::vector<LayerShape> shapes;
  std::size_t offset = 0;
  std::size_t fan_in = spec.input_dim;
  auto push = [&](std::size_t fan_out) {
    LayerShape s{fan_in, fan_out, offset, offset + fan_in * fan_out};
    offset += s.size();
    shapes.push_back(s);
    fan_in = fan_out;
  };
  for (std::size_t h : spec.hidden_dims) push(h);
  push(spec.num_classes);
  return shapes;
}

std::vector<LayerParams> unflatten(const ParameterVector& params, const ModelSpec& spec) {
  if (params.size() != spec.parameter_count()) {
    throw ConfigError("cannot unflatten: parameter count mismatch");
  }
  std::vector<LayerParams> layers;
  for (const auto& s : layer_shapes(spec)) {
    auto w_begin = params.values.begin() + static_cast<std::ptrdiff_t>(s.weight_offset);
    auto b_begin = params.values.begin() + static_cast<std::ptrdiff_t>(s.bias_offset);
    layers.push_back({Matrix(s.fan_out, s.fan_in,
                             std::vector<double>(w_begin, w_begin + static_cast<std::ptrdiff_t>(
                                                                        s.fan_in * s.fan_out))),
                      std::vector<double>(b_begin, b_begin + static_cast<std::ptrdiff_t>(s.fan_out))});
  }
  return layers;
}

ParameterVector flatten(std::span<const LayerParams> layers) {
  ParameterVector out;
  for (const auto& layer : layers) {
    out.values.insert(out.values.end(), layer.weights.data().begin(), layer.weights.data().end());
    out.values.insert(out.values.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> rows) {
  Batch b{Matrix(rows.size(), data.input_dim()), {}};
  b.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = data.inputs.row(rows[r]);
    std::copy(src.begin(), src.end(), b.inputs.row(r).begin());
    b.labels.push_back(data.labels[rows[r]]);
  }
  return b;
}

ForwardResult forward(const ParameterVector& model, const ModelSpec& spec, const Matrix& inputs) {
  Trace t = run_forward(model, spec, inputs);
  ForwardResult out;
  out.logits = std::move(t.acts.back());
  out.embeddings = std::move(t.acts[t.acts.size() - 2]);
  return out;
}

ForwardResult forward(const ParameterVector& model, const ModelSpec& spec, const Batch& batch) {
  return forward(model, spec, batch.inputs);
}

double loss(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) throw ConfigError("loss: logits/labels shape mismatch");
  if (labels.empty()) throw ConfigError("loss: empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const auto y = static_cast<std::size_t>(labels[r]);
    if (y >= row.size()) throw ConfigError("loss: label outside [0, num_classes)");
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - m);
    total += (m + std::log(z)) - row[y];
  }
  return total / static_cast<double>(logits.rows());
}

LossAndGradient loss_and_gradient(const ParameterVector& model, const ModelSpec& spec,
                                  const Batch& batch) {
  check_labels(spec, batch);
  Trace trace = run_forward(model, spec, batch.inputs);
  const auto shapes = layer_shapes(spec);
  const std::size_t n = batch.inputs.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  LossAndGradient out{loss(trace.acts.back(), batch.labels), ParameterVector(model.size())};

  // dL/dlogits = (softmax - onehot) / n
  Matrix delta = softmax(trace.acts.back());
  for (std::size_t r = 0; r < n; ++r) {
    delta(r, static_cast<std::size_t>(batch.labels[r])) -= 1.0;
    for (double& v : delta.row(r)) v *= inv_n;
  }

  for (std::size_t l = shapes.size(); l-- > 0;) {
    const auto& s = shapes[l];
    const Matrix& in = trace.acts[l];
    double* gw = out.gradient.values.data() + s.weight_offset;
    double* gb = out.gradient.values.data() + s.bias_offset;
    for (std::size_t r = 0; r < n; ++r) {
      const double* x = in.row(r).data();
      const double* d = delta.row(r).data();
      for (std::size_t o = 0; o < s.fan_out; ++o) {
        if (d[o] == 0.0) continue;
        gb[o] += d[o];
        double* gwo = gw + o * s.fan_in;
        for (std::size_t i = 0; i < s.fan_in; ++i) gwo[i] += d[o] * x[i];
      }
    }
    if (l == 0) break;
    // Propagate through the weights and the ReLU of the previous layer.
    const double* w = model.values.data() + s.weight_offset;
    Matrix prev(n, s.fan_in);
    for (std::size_t r = 0; r < n; ++r) {
      const double* d = delta.row(r).data();
      const double* a = in.row(r).data();
      double* p = prev.row(r).data();
      for (std::size_t o = 0; o < s.fan_out; ++o) {
        if (d[o] == 0.0) continue;
        const double* wo = w + o * s.fan_in;
        for (std::size_t i = 0; i < s.fan_in; ++i) p[i] += d[o] * wo[i];
      }
      for (std::size_t i = 0; i < s.fan_in; ++i) {
        if (a[i] <= 0.0) p[i] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return out;
}

ParameterVector backward(const ParameterVector& model, const ModelSpec& spec, const Batch& batch) {
  return loss_and_gradient(model, spec, batch).gradient;
}

ParameterVector sgd_step(const ParameterVector& model, const ParameterVector& grad, double lr) {
  if (model.size() != grad.size()) throw ConfigError("sgd_step: length mismatch");
  if (!(lr > 0.0)) throw ConfigError("sgd_step: learning rate must be positive");
  ParameterVector out(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) out[i] = model[i] - lr * grad[i];
  return out;
}

ParameterVector local_train(const ParameterVector& model, const ModelSpec& spec,
                            const Dataset& train, int epochs, std::size_t batch_size,
                            double lr, Rng& rng) {
  if (train.empty()) throw ClientSkipped("client has no training samples");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("local epochs must be non-negative");
  ParameterVector w = model;
  std::vector<std::size_t> order(train.size());
  for (int e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      const Batch batch = make_batch(train, std::span(order).subspan(start, stop - start));
      w = sgd_step(w, backward(w, spec, batch), lr);
    }
  }
  return w;
}

ParameterVector init_parameters(const ModelSpec& spec, Rng& rng) {
  ParameterVector out(spec.parameter_count());
  for (const auto& s : layer_shapes(spec)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = s.weight_offset; i < s.weight_offset + s.size(); ++i) out[i] = dist(rng);
  }
  return out;
}

std::vector<int> predict(const ParameterVector& model, const ModelSpec& spec, const Matrix& inputs) {
  const Matrix logits = forward(model, spec, inputs).logits;
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace corefed
