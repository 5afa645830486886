#pragma once

// Multilayer perceptron math: initialization, forward pass, losses,
// backpropagation, and the plain gradient-descent step.
//
// Layer indexing: weight layer l (1-based, l = 1..L) maps activations of
// layer l-1 onto layer l. Containers indexed by weight layer store layer l at
// position l-1; containers indexed by neuron layer (activations) store the
// input at position 0.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nntrace/core/matrix.hpp"
#include "nntrace/core/rng.hpp"
#include "nntrace/error.hpp"

namespace nntrace {

enum class ActivationKind { Sigmoid, ReLU };
enum class TaskKind { Classification, Regression };

inline std::string to_string(ActivationKind kind) {
  return kind == ActivationKind::Sigmoid ? "sigmoid" : "relu";
}

inline std::string to_string(TaskKind task) {
  return task == TaskKind::Classification ? "classification" : "regression";
}

inline ActivationKind parse_activation(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "sigmoid") return ActivationKind::Sigmoid;
  if (lower == "relu") return ActivationKind::ReLU;
  throw ConfigError("unknown activation '" + std::string(name) + "'", "activation");
}

inline TaskKind parse_task(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "classification") return TaskKind::Classification;
  if (lower == "regression") return TaskKind::Regression;
  throw ConfigError("unknown task '" + std::string(name) + "'", "task");
}

struct NetworkConfig {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  ActivationKind activation = ActivationKind::Sigmoid;
  double learning_rate = 0.1;
  std::uint32_t epochs = 100;
  TaskKind task = TaskKind::Classification;
  std::uint64_t seed = 0;

  std::size_t weight_layers() const noexcept {
    return layer_sizes.empty() ? 0 : layer_sizes.size() - 1;
  }
  std::size_t input_size() const noexcept { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
  std::size_t output_size() const noexcept { return layer_sizes.empty() ? 0 : layer_sizes.back(); }

  /// Structural checks that need no dataset. Throws ConfigError.
  void validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("need at least input and output layers", "layer_sizes");
    for (auto s : layer_sizes)
      if (s == 0) throw ConfigError("layer sizes must be positive", "layer_sizes");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning rate must be positive", "learning_rate");
    if (epochs == 0) throw ConfigError("epochs must be positive", "epochs");
    if (task == TaskKind::Classification && output_size() < 2)
      throw ConfigError("classification requires at least 2 outputs", "layer_sizes");
    if (task == TaskKind::Regression && output_size() != 1)
      throw ConfigError("regression requires output size 1", "layer_sizes");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct NetworkParams {
  std::vector<Matrix> weights;  // weights[l-1]: fan_out x fan_in
  std::vector<Vector> biases;   // biases[l-1]: fan_out

  std::size_t layers() const noexcept { return weights.size(); }

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  bool all_finite() const noexcept {
    for (const auto& w : weights)
      for (double v : w.flat())
        if (!std::isfinite(v)) return false;
    for (const auto& b : biases)
      for (double v : b)
        if (!std::isfinite(v)) return false;
    return true;
  }

  bool matches(const NetworkConfig& config) const noexcept {
    if (weights.size() != config.weight_layers() || biases.size() != weights.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != config.layer_sizes[l + 1] ||
          weights[l].cols() != config.layer_sizes[l] || biases[l].size() != weights[l].rows())
        return false;
    }
    return true;
  }

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

struct ForwardTrace {
  std::vector<Vector> pre;   // pre[0] unused (empty); pre[l] = W[l] a[l-1] + b[l]
  std::vector<Vector> post;  // post[0] = x; post[l] = activation(pre[l])

  const Vector& output() const { return post.back(); }
};

struct Gradients {
  std::vector<Matrix> weights;  // dL/dW per weight layer
  std::vector<Vector> biases;   // dL/db per weight layer
  std::vector<Vector> deltas;   // error signal dL/dz per weight layer (may be empty for oracles)

  friend bool operator==(const Gradients&, const Gradients&) = default;
};

struct Metrics {
  double loss = 0.0;
  std::optional<double> accuracy;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Glorot-uniform weights, zero biases.
inline NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  NetworkParams params;
  for (std::size_t l = 1; l < config.layer_sizes.size(); ++l) {
    const std::size_t fan_in = config.layer_sizes[l - 1];
    const std::size_t fan_out = config.layer_sizes[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& v : w.flat()) v = rng.uniform(-limit, limit);
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(fan_out, 0.0);
  }
  return params;
}

inline double activate(ActivationKind kind, double z) noexcept {
  if (kind == ActivationKind::Sigmoid) return 1.0 / (1.0 + std::exp(-z));
  return z > 0.0 ? z : 0.0;
}

/// d activation / dz. ReLU'(0) is 0.
inline double activation_derivative(ActivationKind kind, double z) noexcept {
  if (kind == ActivationKind::Sigmoid) {
    const double s = activate(kind, z);
    return s * (1.0 - s);
  }
  return z > 0.0 ? 1.0 : 0.0;
}

inline Vector softmax(std::span<const double> logits) {
  Vector out(logits.size());
  if (logits.empty()) return out;
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

/// Lowest index among maximal entries.
inline std::size_t argmax(std::span<const double> values) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

inline ForwardTrace forward(const NetworkParams& params, std::span<const double> x,
                            const NetworkConfig& config) {
  if (!params.matches(config)) throw ShapeError("parameters do not match layer sizes");
  if (x.size() != config.input_size())
    throw ShapeError("input has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(config.input_size()));
  const std::size_t layers = params.layers();
  ForwardTrace trace;
  trace.pre.resize(layers + 1);
  trace.post.resize(layers + 1);
  trace.post[0].assign(x.begin(), x.end());
  for (std::size_t l = 1; l <= layers; ++l) {
    const Matrix& w = params.weights[l - 1];
    const Vector& b = params.biases[l - 1];
    const Vector& in = trace.post[l - 1];
    Vector z(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double acc = b[i];
      const auto row = w.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * in[j];
      z[i] = acc;
    }
    Vector a;
    if (l < layers) {
      a.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(config.activation, z[i]);
    } else if (config.task == TaskKind::Classification) {
      a = softmax(z);
    } else {
      a = z;
    }
    trace.pre[l] = std::move(z);
    trace.post[l] = std::move(a);
  }
  return trace;
}

inline constexpr double kLogFloor = 1e-12;

/// Cross-entropy against a one-hot target (classification) or mean squared
/// error over the output units (regression).
inline double loss(TaskKind task, std::span<const double> output, std::span<const double> target) {
  if (output.size() != target.size() || output.empty())
    throw ShapeError("output and target sizes differ");
  double total = 0.0;
  if (task == TaskKind::Classification) {
    for (std::size_t k = 0; k < output.size(); ++k)
      if (target[k] != 0.0) total -= target[k] * std::log(std::max(output[k], kLogFloor));
    return total;
  }
  for (std::size_t k = 0; k < output.size(); ++k) {
    const double d = output[k] - target[k];
    total += d * d;
  }
  return total / static_cast<double>(output.size());
}

/// dL/dz at the output layer. Softmax+CE gives (o - t); identity+MSE gives
/// (o - t) * 2/n_out.
inline Vector output_delta(TaskKind task, std::span<const double> output,
                           std::span<const double> target) {
  if (output.size() != target.size()) throw ShapeError("output and target sizes differ");
  Vector delta(output.size());
  const double scale =
      task == TaskKind::Classification ? 1.0 : 2.0 / static_cast<double>(output.size());
  for (std::size_t k = 0; k < output.size(); ++k) delta[k] = (output[k] - target[k]) * scale;
  return delta;
}

inline Gradients backward(const NetworkParams& params, const ForwardTrace& trace,
                          std::span<const double> target, const NetworkConfig& config) {
  const std::size_t layers = params.layers();
  if (!params.matches(config) || trace.post.size() != layers + 1)
    throw ShapeError("trace does not match parameters");
  if (target.size() != config.output_size()) throw ShapeError("target size mismatch");

  Gradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  g.deltas.resize(layers);
  g.deltas[layers - 1] = output_delta(config.task, trace.output(), target);
  for (std::size_t l = layers; l >= 1; --l) {
    const Vector& delta = g.deltas[l - 1];
    const Vector& in = trace.post[l - 1];
    Matrix dw(delta.size(), in.size());
    for (std::size_t i = 0; i < delta.size(); ++i)
      for (std::size_t j = 0; j < in.size(); ++j) dw(i, j) = delta[i] * in[j];
    g.weights[l - 1] = std::move(dw);
    g.biases[l - 1] = delta;
    if (l > 1) {
      const Matrix& w = params.weights[l - 1];
      Vector prev(w.cols(), 0.0);
      for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) prev[j] += w(i, j) * delta[i];
      for (std::size_t j = 0; j < prev.size(); ++j)
        prev[j] *= activation_derivative(config.activation, trace.pre[l - 1][j]);
      g.deltas[l - 2] = std::move(prev);
    }
  }
  return g;
}

/// post = pre - lr * grad for every weight and bias.
inline NetworkParams sgd_update(const NetworkParams& params, const Gradients& grads, double lr) {
  if (grads.weights.size() != params.layers() || grads.biases.size() != params.layers())
    throw ShapeError("gradient layer count mismatch");
  NetworkParams out = params;
  for (std::size_t l = 0; l < params.layers(); ++l) {
    if (!grads.weights[l].same_shape(params.weights[l]) ||
        grads.biases[l].size() != params.biases[l].size())
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(l + 1));
    auto w = out.weights[l].flat();
    const auto gw = grads.weights[l].flat();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = w[i] - lr * gw[i];
    for (std::size_t i = 0; i < out.biases[l].size(); ++i)
      out.biases[l][i] = out.biases[l][i] - lr * grads.biases[l][i];
  }
  return out;
}

/// Fraction of rows whose output argmax equals the target argmax.
inline double accuracy(const std::vector<Vector>& outputs, const std::vector<Vector>& targets,
                       TaskKind task) {
  if (task != TaskKind::Classification)
    throw UnsupportedMetricError("accuracy is only defined for classification");
  if (outputs.size() != targets.size()) throw ShapeError("outputs and targets differ in length");
  if (outputs.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i)
    if (argmax(outputs[i]) == argmax(targets[i])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(outputs.size());
}

/// Mean of per-row gradients (full-batch gradient). Deltas are averaged too.
inline Gradients mean_gradients(const std::vector<Gradients>& per_row) {
  if (per_row.empty()) throw ShapeError("no gradients to average");
  Gradients mean = per_row.front();
  const double n = static_cast<double>(per_row.size());
  for (std::size_t r = 1; r < per_row.size(); ++r) {
    for (std::size_t l = 0; l < mean.weights.size(); ++l) {
      auto dst = mean.weights[l].flat();
      const auto src = per_row[r].weights[l].flat();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      for (std::size_t i = 0; i < mean.biases[l].size(); ++i) {
        mean.biases[l][i] += per_row[r].biases[l][i];
        mean.deltas[l][i] += per_row[r].deltas[l][i];
      }
    }
  }
  for (std::size_t l = 0; l < mean.weights.size(); ++l) {
    for (double& v : mean.weights[l].flat()) v /= n;
    for (double& v : mean.biases[l]) v /= n;
    for (double& v : mean.deltas[l]) v /= n;
  }
  return mean;
}

}  // namespace nntrace
