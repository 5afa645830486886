#pragma once

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "nntrace/core/matrix.hpp"
#include "nntrace/core/network.hpp"

namespace nntrace::trace {

struct EpochStart {
  friend bool operator==(const EpochStart&, const EpochStart&) = default;
};

/// Forward signal crossing weight layer `to_layer`; carries the weights in
/// effect for this pass (pre-update).
struct ForwardPulse {
  std::uint32_t from_layer = 0;
  std::uint32_t to_layer = 0;
  Matrix edge_weights;
  friend bool operator==(const ForwardPulse&, const ForwardPulse&) = default;
};

/// Batch-mean activation of each neuron in `layer`.
struct ActivationsComputed {
  std::uint32_t layer = 0;
  Vector values;
  friend bool operator==(const ActivationsComputed&, const ActivationsComputed&) = default;
};

/// Batch-mean output vector plus the per-row outputs in training-split order.
struct OutputProduced {
  Vector values;
  std::vector<Vector> samples;
  friend bool operator==(const OutputProduced&, const OutputProduced&) = default;
};

struct LossComputed {
  double loss = 0.0;
  friend bool operator==(const LossComputed&, const LossComputed&) = default;
};

/// Batch-mean error signal dL/dz arriving at `into_layer`.
struct BackwardPulse {
  std::uint32_t into_layer = 0;
  Vector deltas;
  friend bool operator==(const BackwardPulse&, const BackwardPulse&) = default;
};

/// One gradient-descent step on a single layer, with both parameter states
/// and the gradient that links them: post = pre - learning_rate * grad.
struct WeightsUpdated {
  std::uint32_t layer = 0;
  double learning_rate = 0.0;
  Matrix w_pre;
  Matrix w_post;
  Vector b_pre;
  Vector b_post;
  Matrix grad_w;
  Vector grad_b;
  friend bool operator==(const WeightsUpdated&, const WeightsUpdated&) = default;
};

struct EpochEnd {
  Metrics metrics;
  friend bool operator==(const EpochEnd&, const EpochEnd&) = default;
};

using EventPayload = std::variant<EpochStart, ForwardPulse, ActivationsComputed, OutputProduced,
                                  LossComputed, BackwardPulse, WeightsUpdated, EpochEnd>;

struct TrainingEvent {
  std::uint64_t seq = 0;
  std::uint32_t epoch = 0;
  EventPayload payload;

  template <typename T>
  bool is() const noexcept {
    return std::holds_alternative<T>(payload);
  }
  template <typename T>
  const T& as() const {
    return std::get<T>(payload);
  }
  template <typename T>
  T& as() {
    return std::get<T>(payload);
  }

  friend bool operator==(const TrainingEvent&, const TrainingEvent&) = default;
};

/// Wire name of the payload variant.
inline std::string_view type_name(const EventPayload& payload) noexcept {
  constexpr std::string_view names[] = {"EPOCH_START",     "FORWARD_PULSE",  "ACTIVATIONS_COMPUTED",
                                        "OUTPUT_PRODUCED", "LOSS_COMPUTED",  "BACKWARD_PULSE",
                                        "WEIGHTS_UPDATED", "EPOCH_END"};
  return names[payload.index()];
}

inline std::string_view type_name(const TrainingEvent& event) noexcept {
  return type_name(event.payload);
}

/// Events per epoch for a network with `weight_layers` weight layers.
constexpr std::size_t events_per_epoch(std::size_t weight_layers) noexcept {
  return 4 * weight_layers + 4;
}

}  // namespace nntrace::trace
