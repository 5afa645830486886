#pragma once

// Executes one full-batch training epoch and records it as an ordered event
// sequence: forward pulses layer by layer, output and loss, then backward
// pulses from the output layer down, each followed by that layer's update.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "nntrace/core/network.hpp"
#include "nntrace/data/dataset.hpp"
#include "nntrace/trace/event.hpp"

namespace nntrace::trace {

/// Rows fed to one epoch: normalized inputs and targets, row-aligned.
struct Batch {
  std::vector<Vector> inputs;
  std::vector<Vector> targets;

  std::size_t size() const noexcept { return inputs.size(); }
  bool empty() const noexcept { return inputs.empty(); }
};

inline Batch make_batch(const data::Dataset& ds, const std::vector<std::size_t>& rows) {
  Batch b;
  b.inputs.reserve(rows.size());
  b.targets.reserve(rows.size());
  for (std::size_t r : rows) {
    b.inputs.push_back(ds.x(r));
    b.targets.push_back(ds.y(r));
  }
  return b;
}

inline Batch train_batch(const data::Dataset& ds) { return make_batch(ds, ds.split.train); }
inline Batch val_batch(const data::Dataset& ds) { return make_batch(ds, ds.split.val); }

struct BatchEvaluation {
  std::vector<ForwardTrace> traces;
  std::vector<Vector> outputs;
  double loss = 0.0;                // mean per-row loss
  std::optional<double> accuracy;  // classification only
};

inline BatchEvaluation evaluate(const NetworkParams& params, const NetworkConfig& config,
                                const Batch& batch) {
  BatchEvaluation ev;
  ev.traces.reserve(batch.size());
  ev.outputs.reserve(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ev.traces.push_back(forward(params, batch.inputs[i], config));
    ev.outputs.push_back(ev.traces.back().output());
    total += loss(config.task, ev.outputs.back(), batch.targets[i]);
  }
  ev.loss = batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
  if (config.task == TaskKind::Classification && !batch.empty())
    ev.accuracy = accuracy(ev.outputs, batch.targets, config.task);
  return ev;
}

inline Vector mean_rows(const std::vector<Vector>& rows) {
  Vector mean(rows.empty() ? 0 : rows.front().size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += r[i];
  for (double& v : mean) v /= static_cast<double>(rows.size());
  return mean;
}

struct EpochResult {
  NetworkParams params;  // after the update
  std::vector<TrainingEvent> events;
  Metrics metrics;

  /// False once training has diverged: a non-finite loss or parameter.
  /// Such an epoch cannot be serialized faithfully and is never emitted.
  bool finite() const noexcept {
    auto ok = [](const std::optional<double>& v) { return !v || std::isfinite(*v); };
    return std::isfinite(metrics.loss) && ok(metrics.val_loss) && params.all_finite();
  }
};

/// Loss and accuracy are measured with the pre-update parameters, on the
/// same forward pass that drives the update. Validation metrics also use the
/// pre-update parameters.
inline EpochResult run_epoch(const NetworkParams& params, const NetworkConfig& config,
                             const Batch& train, const Batch* val = nullptr,
                             std::uint32_t epoch = 0, std::uint64_t first_seq = 0) {
  if (train.empty()) throw DataError("training split is empty");
  if (!params.matches(config)) throw ShapeError("parameters do not match configuration");
  const auto layers = static_cast<std::uint32_t>(params.layers());

  const BatchEvaluation ev = evaluate(params, config, train);
  std::vector<Gradients> per_row;
  per_row.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    per_row.push_back(backward(params, ev.traces[i], train.targets[i], config));
  const Gradients grads = mean_gradients(per_row);

  EpochResult result;
  result.params = sgd_update(params, grads, config.learning_rate);
  result.metrics.loss = ev.loss;
  result.metrics.accuracy = ev.accuracy;
  if (val && !val->empty()) {
    const BatchEvaluation vev = evaluate(params, config, *val);
    result.metrics.val_loss = vev.loss;
    result.metrics.val_accuracy = vev.accuracy;
  }

  auto& out = result.events;
  out.reserve(events_per_epoch(layers));
  std::uint64_t seq = first_seq;
  auto emit = [&](EventPayload payload) { out.push_back({seq++, epoch, std::move(payload)}); };

  emit(EpochStart{});
  for (std::uint32_t l = 1; l <= layers; ++l) {
    emit(ForwardPulse{l - 1, l, params.weights[l - 1]});
    std::vector<Vector> layer_values;
    layer_values.reserve(ev.traces.size());
    for (const auto& t : ev.traces) layer_values.push_back(t.post[l]);
    emit(ActivationsComputed{l, mean_rows(layer_values)});
  }
  emit(OutputProduced{mean_rows(ev.outputs), ev.outputs});
  emit(LossComputed{ev.loss});
  for (std::uint32_t l = layers; l >= 1; --l) {
    emit(BackwardPulse{l, grads.deltas[l - 1]});
    emit(WeightsUpdated{l, config.learning_rate, params.weights[l - 1], result.params.weights[l - 1],
                        params.biases[l - 1], result.params.biases[l - 1], grads.weights[l - 1],
                        grads.biases[l - 1]});
  }
  emit(EpochEnd{result.metrics});
  return result;
}

}  // namespace nntrace::trace
