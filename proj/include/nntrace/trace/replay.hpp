#pragma once

// Replay soundness: rebuild each epoch's parameters from its w_pre/b_pre
// snapshots, recompute the epoch through the network math, and compare every
// traced quantity. Needs the dataset and config the trace was produced with.

#include <algorithm>
#include <cmath>
#include <span>
#include <variant>
#include <optional>
#include <string>
#include <vector>

#include "nntrace/trace/epoch.hpp"
#include "nntrace/trace/validate.hpp"

namespace nntrace::trace {

inline constexpr double kReplayTolerance = 1e-12;

namespace replay_detail {

inline bool close(double a, double b, double tol) noexcept {
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

inline bool close(std::span<const double> a, std::span<const double> b, double tol) noexcept {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!close(a[i], b[i], tol)) return false;
  return true;
}

inline bool close(const Matrix& a, const Matrix& b, double tol) noexcept {
  return a.same_shape(b) && close(a.flat(), b.flat(), tol);
}

inline bool close(const std::optional<double>& a, const std::optional<double>& b, double tol) {
  if (a.has_value() != b.has_value()) return false;
  return !a || close(*a, *b, tol);
}

}  // namespace replay_detail

struct ReplayMismatch {
  std::uint64_t seq = 0;
  std::string message;

  std::string describe() const { return "seq " + std::to_string(seq) + ": replay: " + message; }
};

/// Assumes the trace already passed validate_trace. Returns the first
/// payload that the recomputation does not reproduce within `tol`.
inline std::optional<ReplayMismatch> replay_trace(const std::vector<TrainingEvent>& events,
                                                  const NetworkConfig& config, const Batch& train,
                                                  const Batch* val = nullptr,
                                                  double tol = kReplayTolerance) {
  using replay_detail::close;
  const std::size_t per_epoch = events_per_epoch(config.weight_layers());
  if (events.size() % per_epoch != 0)
    return ReplayMismatch{events.empty() ? 0 : events.back().seq,
                          "trace length does not match the configured layer count"};

  for (std::size_t start = 0; start < events.size(); start += per_epoch) {
    const std::size_t layers = config.weight_layers();
    NetworkParams params;
    params.weights.resize(layers);
    params.biases.resize(layers);
    double lr = config.learning_rate;
    for (std::size_t k = start; k < start + per_epoch; ++k) {
      if (const auto* u = std::get_if<WeightsUpdated>(&events[k].payload)) {
        if (u->layer < 1 || u->layer > layers)
          return ReplayMismatch{events[k].seq, "layer index out of range"};
        params.weights[u->layer - 1] = u->w_pre;
        params.biases[u->layer - 1] = u->b_pre;
        lr = u->learning_rate;
      }
    }
    if (!params.matches(config))
      return ReplayMismatch{events[start].seq, "snapshot shapes do not match the configuration"};

    NetworkConfig replay_config = config;
    replay_config.learning_rate = lr;
    const EpochResult expected =
        run_epoch(params, replay_config, train, val, events[start].epoch, events[start].seq);

    for (std::size_t k = 0; k < per_epoch; ++k) {
      const TrainingEvent& got = events[start + k];
      const TrainingEvent& want = expected.events[k];
      auto mismatch = [&](const std::string& what) {
        return ReplayMismatch{got.seq, std::string(type_name(got)) + " " + what + " not reproduced"};
      };
      if (got.payload.index() != want.payload.index()) return mismatch("type");
      if (const auto* g = std::get_if<ForwardPulse>(&got.payload)) {
        if (!close(g->edge_weights, want.as<ForwardPulse>().edge_weights, tol)) return mismatch("edge_weights");
      } else if (const auto* g = std::get_if<ActivationsComputed>(&got.payload)) {
        if (!close(g->values, want.as<ActivationsComputed>().values, tol)) return mismatch("values");
      } else if (const auto* g = std::get_if<OutputProduced>(&got.payload)) {
        const auto& w = want.as<OutputProduced>();
        if (!close(g->values, w.values, tol) || g->samples.size() != w.samples.size())
          return mismatch("values");
        for (std::size_t i = 0; i < w.samples.size(); ++i)
          if (!close(g->samples[i], w.samples[i], tol)) return mismatch("samples");
      } else if (const auto* g = std::get_if<LossComputed>(&got.payload)) {
        if (!close(g->loss, want.as<LossComputed>().loss, tol)) return mismatch("loss");
      } else if (const auto* g = std::get_if<BackwardPulse>(&got.payload)) {
        if (!close(g->deltas, want.as<BackwardPulse>().deltas, tol)) return mismatch("deltas");
      } else if (const auto* g = std::get_if<WeightsUpdated>(&got.payload)) {
        const auto& w = want.as<WeightsUpdated>();
        if (!close(g->grad_w, w.grad_w, tol) || !close(g->grad_b, w.grad_b, tol))
          return mismatch("gradient");
        if (!close(g->w_post, w.w_post, tol) || !close(g->b_post, w.b_post, tol))
          return mismatch("post-update state");
      } else if (const auto* g = std::get_if<EpochEnd>(&got.payload)) {
        const auto& w = want.as<EpochEnd>().metrics;
        if (!close(g->metrics.loss, w.loss, tol) || !close(g->metrics.accuracy, w.accuracy, tol) ||
            !close(g->metrics.val_loss, w.val_loss, tol) ||
            !close(g->metrics.val_accuracy, w.val_accuracy, tol))
          return mismatch("metrics");
      }
    }
  }
  return std::nullopt;
}

}  // namespace nntrace::trace
