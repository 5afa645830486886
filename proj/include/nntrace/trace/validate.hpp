#pragma once

// Mechanical checks over an event trace:
//   seq-order            seq increases by exactly 1 from event to event
//   epoch-order          epoch numbers are constant within an epoch, +1 across
//   epoch-grammar        every epoch matches the fixed phase order
//   update-timing        a layer's update never precedes its backward pulse
//   update-algebra       w_post == w_pre - lr * grad_w exactly (and for biases)
//   snapshot-continuity  forward weights equal w_pre, and each epoch starts
//                        from the previous epoch's post-update state

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nntrace/trace/event.hpp"

namespace nntrace::trace {

enum class Rule { SeqOrder, EpochOrder, Grammar, UpdateTiming, UpdateAlgebra, SnapshotContinuity };

inline std::string to_string(Rule rule) {
  switch (rule) {
    case Rule::SeqOrder: return "seq-order";
    case Rule::EpochOrder: return "epoch-order";
    case Rule::Grammar: return "epoch-grammar";
    case Rule::UpdateTiming: return "update-timing";
    case Rule::UpdateAlgebra: return "update-algebra";
    case Rule::SnapshotContinuity: return "snapshot-continuity";
  }
  return "unknown";
}

struct Violation {
  std::uint64_t seq = 0;
  Rule rule = Rule::Grammar;
  std::string message;

  std::string describe() const {
    return "seq " + std::to_string(seq) + ": " + to_string(rule) + ": " + message;
  }
};

/// Incremental validator; feed events in stream order.
class TraceValidator {
 public:
  /// Returns the first violation caused by `event`, if any. After a
  /// violation the validator should be discarded.
  std::optional<Violation> feed(const TrainingEvent& event) {
    if (last_seq_ && event.seq != *last_seq_ + 1)
      return fail(event, Rule::SeqOrder,
                  "expected seq " + std::to_string(*last_seq_ + 1) + ", got " + std::to_string(event.seq));
    last_seq_ = event.seq;

    if (phase_ == Phase::ExpectStart) {
      if (!event.is<EpochStart>()) return grammar(event, "EPOCH_START");
      if (last_epoch_ && event.epoch != *last_epoch_ + 1)
        return fail(event, Rule::EpochOrder,
                    "epoch " + std::to_string(event.epoch) + " follows epoch " + std::to_string(*last_epoch_));
      epoch_ = event.epoch;
      forward_done_ = 0;
      backward_seen_.clear();
      forward_weights_.clear();
      phase_ = Phase::ExpectForward;
      return std::nullopt;
    }
    if (event.epoch != epoch_)
      return fail(event, Rule::EpochOrder,
                  "event tagged epoch " + std::to_string(event.epoch) + " inside epoch " + std::to_string(epoch_));

    switch (phase_) {
      case Phase::ExpectForward: {
        if (event.is<OutputProduced>() && forward_done_ >= 1 &&
            (!layers_ || *layers_ == forward_done_)) {
          layers_ = forward_done_;
          phase_ = Phase::ExpectLoss;
          return std::nullopt;
        }
        if (event.is<WeightsUpdated>()) return timing(event);
        if (!event.is<ForwardPulse>()) return grammar(event, "FORWARD_PULSE");
        const auto& p = event.as<ForwardPulse>();
        if (p.from_layer != forward_done_ || p.to_layer != forward_done_ + 1 ||
            (layers_ && p.to_layer > *layers_))
          return grammar(event, "FORWARD_PULSE " + std::to_string(forward_done_) + "->" +
                                    std::to_string(forward_done_ + 1));
        forward_weights_.push_back(p.edge_weights);
        phase_ = Phase::ExpectActivations;
        return std::nullopt;
      }
      case Phase::ExpectActivations: {
        if (!event.is<ActivationsComputed>() ||
            event.as<ActivationsComputed>().layer != forward_done_ + 1)
          return grammar(event, "ACTIVATIONS_COMPUTED for layer " + std::to_string(forward_done_ + 1));
        ++forward_done_;
        phase_ = Phase::ExpectForward;
        return std::nullopt;
      }
      case Phase::ExpectLoss:
        if (event.is<WeightsUpdated>()) return timing(event);
        if (!event.is<LossComputed>()) return grammar(event, "LOSS_COMPUTED");
        backward_next_ = *layers_;
        phase_ = Phase::ExpectBackward;
        return std::nullopt;
      case Phase::ExpectBackward: {
        if (event.is<WeightsUpdated>()) return timing(event);
        if (!event.is<BackwardPulse>() || event.as<BackwardPulse>().into_layer != backward_next_)
          return grammar(event, "BACKWARD_PULSE into layer " + std::to_string(backward_next_));
        backward_seen_.push_back(backward_next_);
        phase_ = Phase::ExpectUpdate;
        return std::nullopt;
      }
      case Phase::ExpectUpdate: {
        if (!event.is<WeightsUpdated>()) return grammar(event, "WEIGHTS_UPDATED");
        const auto& u = event.as<WeightsUpdated>();
        if (u.layer != backward_next_) {
          if (!seen_backward(u.layer)) return timing(event);
          return grammar(event, "WEIGHTS_UPDATED for layer " + std::to_string(backward_next_));
        }
        if (auto v = check_update(event, u)) return v;
        if (backward_next_ == 1) {
          phase_ = Phase::ExpectEnd;
        } else {
          --backward_next_;
          phase_ = Phase::ExpectBackward;
        }
        return std::nullopt;
      }
      case Phase::ExpectEnd:
        if (!event.is<EpochEnd>()) return grammar(event, "EPOCH_END");
        last_epoch_ = epoch_;
        phase_ = Phase::ExpectStart;
        return std::nullopt;
      case Phase::ExpectStart:
        break;
    }
    return std::nullopt;
  }

  /// Call after the last event. A trace must end on an epoch boundary.
  std::optional<Violation> finish() const {
    if (phase_ != Phase::ExpectStart)
      return Violation{last_seq_.value_or(0), Rule::Grammar, "trace ends in the middle of an epoch"};
    return std::nullopt;
  }

 private:
  enum class Phase { ExpectStart, ExpectForward, ExpectActivations, ExpectLoss, ExpectBackward, ExpectUpdate, ExpectEnd };

  static std::optional<Violation> fail(const TrainingEvent& e, Rule rule, std::string message) {
    return Violation{e.seq, rule, std::move(message)};
  }

  static std::optional<Violation> grammar(const TrainingEvent& e, const std::string& expected) {
    return fail(e, Rule::Grammar, "expected " + expected + ", got " + std::string(type_name(e)));
  }

  std::optional<Violation> timing(const TrainingEvent& e) const {
    return fail(e, Rule::UpdateTiming,
                "layer " + std::to_string(e.as<WeightsUpdated>().layer) +
                    " updated before its backward pulse arrived");
  }

  bool seen_backward(std::uint32_t layer) const {
    for (auto l : backward_seen_)
      if (l == layer) return true;
    return false;
  }

  std::optional<Violation> check_update(const TrainingEvent& e, const WeightsUpdated& u) {
    if (!u.w_pre.same_shape(u.w_post) || !u.w_pre.same_shape(u.grad_w) ||
        u.b_pre.size() != u.b_post.size() || u.b_pre.size() != u.grad_b.size() ||
        u.b_pre.size() != u.w_pre.rows())
      return fail(e, Rule::UpdateAlgebra, "pre/post/gradient shapes differ");
    const auto pre = u.w_pre.flat();
    const auto post = u.w_post.flat();
    const auto grad = u.grad_w.flat();
    for (std::size_t i = 0; i < pre.size(); ++i)
      if (post[i] != pre[i] - u.learning_rate * grad[i])
        return fail(e, Rule::UpdateAlgebra,
                    "layer " + std::to_string(u.layer) + " weight " + std::to_string(i) +
                        ": w_post != w_pre - lr * grad");
    for (std::size_t i = 0; i < u.b_pre.size(); ++i)
      if (u.b_post[i] != u.b_pre[i] - u.learning_rate * u.grad_b[i])
        return fail(e, Rule::UpdateAlgebra,
                    "layer " + std::to_string(u.layer) + " bias " + std::to_string(i) +
                        ": b_post != b_pre - lr * grad");

    const std::size_t idx = u.layer - 1;
    if (idx >= forward_weights_.size() || !(forward_weights_[idx] == u.w_pre))
      return fail(e, Rule::SnapshotContinuity,
                  "layer " + std::to_string(u.layer) + " w_pre differs from its forward-pass weights");
    if (previous_post_.size() == *layers_) {
      if (!(previous_post_[idx].first == u.w_pre) || previous_post_[idx].second != u.b_pre)
        return fail(e, Rule::SnapshotContinuity,
                    "layer " + std::to_string(u.layer) + " does not start from the previous epoch's post state");
    }
    next_post_.resize(*layers_);
    next_post_[idx] = {u.w_post, u.b_post};
    if (idx == 0) previous_post_ = std::move(next_post_), next_post_.clear();
    return std::nullopt;
  }

  Phase phase_ = Phase::ExpectStart;
  std::optional<std::uint64_t> last_seq_;
  std::optional<std::uint32_t> last_epoch_;
  std::uint32_t epoch_ = 0;
  std::optional<std::uint32_t> layers_;
  std::uint32_t forward_done_ = 0;
  std::uint32_t backward_next_ = 0;
  std::vector<std::uint32_t> backward_seen_;
  std::vector<Matrix> forward_weights_;
  std::vector<std::pair<Matrix, Vector>> previous_post_;
  std::vector<std::pair<Matrix, Vector>> next_post_;
};

/// First violation in `events`, or nullopt when the trace is well formed.
inline std::optional<Violation> validate_trace(const std::vector<TrainingEvent>& events) {
  TraceValidator validator;
  for (const auto& e : events)
    if (auto v = validator.feed(e)) return v;
  return validator.finish();
}

}  // namespace nntrace::trace
