#pragma once

// A live training session: play/pause/stop state machine driving epochs one
// event at a time, with prediction, equations and status available in every
// state.
//
// Thread model: every public member locks the session mutex, so control()
// and predict() called from other threads take effect between two events.
// The driver calls advance(); subscribers poll events_from() and block in
// wait_changed().

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nntrace/core/network.hpp"
#include "nntrace/data/dataset.hpp"
#include "nntrace/session/equation.hpp"
#include "nntrace/trace/epoch.hpp"
#include "nntrace/trace/event.hpp"

namespace nntrace::session {

enum class SessionStatus { Idle, Running, Paused, Completed, Stopped };
enum class Command { Play, Pause, Stop };

inline std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Idle: return "Idle";
    case SessionStatus::Running: return "Running";
    case SessionStatus::Paused: return "Paused";
    case SessionStatus::Completed: return "Completed";
    case SessionStatus::Stopped: return "Stopped";
  }
  return "Unknown";
}

inline std::string to_string(Command c) {
  switch (c) {
    case Command::Play: return "Play";
    case Command::Pause: return "Pause";
    case Command::Stop: return "Stop";
  }
  return "Unknown";
}

inline Command parse_command(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "play") return Command::Play;
  if (lower == "pause") return Command::Pause;
  if (lower == "stop") return Command::Stop;
  throw InputError("unknown command '" + std::string(name) + "' (expected Play, Pause or Stop)");
}

inline bool is_terminal(SessionStatus s) noexcept {
  return s == SessionStatus::Completed || s == SessionStatus::Stopped;
}

/// The user-command transition table; nullopt marks an illegal pair.
/// Running -> Completed happens only through advance().
inline std::optional<SessionStatus> next_status(SessionStatus from, Command command) noexcept {
  switch (from) {
    case SessionStatus::Idle:
      if (command == Command::Play) return SessionStatus::Running;
      return std::nullopt;
    case SessionStatus::Running:
      if (command == Command::Pause) return SessionStatus::Paused;
      if (command == Command::Stop) return SessionStatus::Stopped;
      return std::nullopt;
    case SessionStatus::Paused:
      if (command == Command::Play) return SessionStatus::Running;
      if (command == Command::Stop) return SessionStatus::Stopped;
      return std::nullopt;
    case SessionStatus::Completed:
    case SessionStatus::Stopped:
      return std::nullopt;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Configuration bounds

inline constexpr std::size_t kMaxHiddenLayers = 6;
inline constexpr std::size_t kMaxNeuronsPerLayer = 32;
inline constexpr double kMaxLearningRate = 10.0;
inline constexpr std::uint32_t kMaxEpochs = 10000;

struct ConfigViolation {
  std::string field;
  std::string message;
};

/// Every bound and dataset-compatibility problem in `config`; empty when valid.
inline std::vector<ConfigViolation> validate_config(const data::Dataset& dataset,
                                                    const NetworkConfig& config) {
  std::vector<ConfigViolation> out;
  const auto& sizes = config.layer_sizes;
  if (sizes.size() < 2) {
    out.push_back({"layer_sizes", "need at least input and output layers"});
  } else {
    const std::size_t hidden = sizes.size() - 2;
    if (hidden > kMaxHiddenLayers)
      out.push_back({"layer_sizes", "at most " + std::to_string(kMaxHiddenLayers) +
                                        " hidden layers allowed, got " + std::to_string(hidden)});
    for (std::size_t l = 1; l + 1 < sizes.size(); ++l)
      if (sizes[l] < 1 || sizes[l] > kMaxNeuronsPerLayer)
        out.push_back({"layer_sizes", "hidden layer " + std::to_string(l) + " must have 1.." +
                                          std::to_string(kMaxNeuronsPerLayer) + " neurons, got " +
                                          std::to_string(sizes[l])});
    if (sizes.front() != dataset.feature_count())
      out.push_back({"layer_sizes", "input size ≠ feature count (" + std::to_string(sizes.front()) +
                                        " vs " + std::to_string(dataset.feature_count()) + ")"});
    if (dataset.schema.task == TaskKind::Regression && sizes.back() != 1)
      out.push_back({"layer_sizes", "regression requires output size 1"});
    if (dataset.schema.task == TaskKind::Classification &&
        sizes.back() != dataset.schema.class_labels.size())
      out.push_back({"layer_sizes", "output size ≠ class count (" + std::to_string(sizes.back()) +
                                        " vs " + std::to_string(dataset.schema.class_labels.size()) + ")"});
  }
  if (config.task != dataset.schema.task)
    out.push_back({"task", "task " + to_string(config.task) + " does not match dataset task " +
                               to_string(dataset.schema.task)});
  if (!(config.learning_rate > 0.0 && config.learning_rate <= kMaxLearningRate))
    out.push_back({"learning_rate", "learning rate must be in (0, 10]"});
  if (config.epochs < 1 || config.epochs > kMaxEpochs)
    out.push_back({"epochs", "epochs must be in [1, 10000]"});
  return out;
}

/// Thrown by create_session; carries every violation.
class ConfigInvalid : public ConfigError {
 public:
  explicit ConfigInvalid(std::vector<ConfigViolation> violations)
      : ConfigError(join(violations), violations.empty() ? "" : violations.front().field),
        violations_(std::move(violations)) {}
  const std::vector<ConfigViolation>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<ConfigViolation>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : "; ") + x.field + ": " + x.message;
    return s;
  }
  std::vector<ConfigViolation> violations_;
};

// ---------------------------------------------------------------------------

struct HistoryEntry {
  std::uint32_t epoch = 0;
  Metrics metrics;
  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct Prediction {
  Vector outputs;                          // probabilities, or the scaled regression output
  std::optional<std::size_t> label_index;  // classification
  std::optional<std::string> label;        // classification
  std::optional<double> value;             // regression, in target units
};

struct NetworkInfo {
  struct DatasetStats {
    std::string name;
    std::size_t samples = 0;
    std::size_t train_samples = 0;
    std::size_t val_samples = 0;
    std::vector<std::string> feature_names;
    std::string target;
    TaskKind task = TaskKind::Classification;
    std::vector<std::string> class_labels;
  } dataset;
  struct Architecture {
    std::vector<std::size_t> layer_sizes;
    std::size_t hidden_layers = 0;
    std::string hidden_activation;
    std::string output_activation;
  } architecture;
  struct TrainingStatus {
    SessionStatus status = SessionStatus::Idle;
    std::uint32_t current_epoch = 0;
    std::uint32_t total_epochs = 0;
    std::uint64_t events_emitted = 0;
    std::string stop_reason;  // set when the session stopped itself
  } training;
  struct Hyperparameters {
    double learning_rate = 0.0;
    std::uint32_t epochs = 0;
    std::uint64_t seed = 0;
    std::string training_regime = "full-batch gradient descent";
  } hyperparameters;
  struct ModelStats {
    std::size_t parameter_count = 0;
    double mean_abs_weight = 0.0;
    double max_abs_weight = 0.0;
    std::optional<Metrics> latest_metrics;
  } model;
  std::uint32_t current_epoch = 0;
};

/// State handed to a subscriber joining mid-run, taken at an event boundary.
struct Snapshot {
  SessionStatus status = SessionStatus::Idle;
  std::uint32_t current_epoch = 0;
  std::uint64_t next_seq = 0;
  NetworkParams params;
  std::vector<HistoryEntry> history;
};

struct SessionOptions {
  /// Retained-event cap; an epoch that would exceed it is not started and
  /// the session stops instead.
  std::size_t max_events = 200'000;
};

class Session {
 public:
  Session(std::string id, data::Dataset dataset, NetworkConfig config, SessionOptions options = {})
      : id_(std::move(id)), dataset_(std::move(dataset)), config_(std::move(config)), options_(options) {
    if (auto violations = validate_config(dataset_, config_); !violations.empty())
      throw ConfigInvalid(std::move(violations));
    if (dataset_.split.train.empty()) throw DataError("training split is empty");
    params_ = init_params(config_, config_.seed);
    train_ = trace::train_batch(dataset_);
    val_ = trace::val_batch(dataset_);
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const noexcept { return id_; }
  const NetworkConfig& config() const noexcept { return config_; }
  const data::Dataset& dataset() const noexcept { return dataset_; }

  SessionStatus status() const {
    std::lock_guard lock(mu_);
    return status_;
  }
  std::uint32_t current_epoch() const {
    std::lock_guard lock(mu_);
    return current_epoch_;
  }
  std::uint64_t next_seq() const {
    std::lock_guard lock(mu_);
    return log_.size();
  }
  NetworkParams params() const {
    std::lock_guard lock(mu_);
    return params_;
  }

  /// Applies a user command; throws StateError naming the current status
  /// when the pair is not in the transition table.
  SessionStatus control(Command command) {
    std::lock_guard lock(mu_);
    const auto next = next_status(status_, command);
    if (!next)
      throw StateError("cannot " + to_string(command) + " a session that is " + to_string(status_));
    status_ = *next;
    bump();
    return status_;
  }

  /// Emits the next event of the current epoch. Requires Running.
  std::vector<trace::TrainingEvent> advance() {
    std::lock_guard lock(mu_);
    if (status_ != SessionStatus::Running)
      throw StateError("cannot advance a session that is " + to_string(status_));
    if (pending_.empty()) {
      const std::size_t per_epoch = trace::events_per_epoch(config_.weight_layers());
      if (log_.size() + per_epoch > options_.max_events) {
        status_ = SessionStatus::Stopped;
        stop_reason_ = "event retention limit reached (" + std::to_string(options_.max_events) + " events)";
        bump();
        return {};
      }
      const auto epoch_result = trace::run_epoch(params_, config_, train_,
                                                 val_.empty() ? nullptr : &val_, current_epoch_,
                                                 log_.size());
      if (!epoch_result.finite()) {
        status_ = SessionStatus::Stopped;
        stop_reason_ = "training diverged in epoch " + std::to_string(current_epoch_) +
                       " (non-finite loss or weights)";
        bump();
        return {};
      }
      pending_.assign(epoch_result.events.begin(), epoch_result.events.end());
    }
    trace::TrainingEvent event = std::move(pending_.front());
    pending_.pop_front();
    apply(event);
    log_.push_back(event);
    bump();
    return {std::move(event)};
  }

  /// Drives Running to a terminal or paused state; returns events emitted.
  std::size_t run() {
    std::size_t emitted = 0;
    while (status() == SessionStatus::Running) emitted += advance().size();
    return emitted;
  }

  /// Forward pass with the current parameters on raw (unnormalized) inputs.
  Prediction predict(std::span<const double> raw_inputs) const {
    const Vector x = dataset_.normalize_input(raw_inputs);
    NetworkParams snapshot;
    {
      std::lock_guard lock(mu_);
      snapshot = params_;
    }
    Prediction p;
    p.outputs = forward(snapshot, x, config_).output();
    if (config_.task == TaskKind::Classification) {
      p.label_index = argmax(p.outputs);
      p.label = dataset_.schema.class_labels.at(*p.label_index);
    } else if (dataset_.target_stats) {
      p.value = dataset_.target_stats->invert(p.outputs.front());
    } else {
      p.value = p.outputs.front();
    }
    return p;
  }

  NeuronEquation neuron_equation(std::size_t layer, std::size_t index) const {
    std::lock_guard lock(mu_);
    return make_equation(params_, config_, dataset_.schema.feature_names, layer, index);
  }

  NetworkInfo network_info() const {
    std::lock_guard lock(mu_);
    return info_locked();
  }

  /// network_info and metrics_history taken together at one event boundary.
  struct Report {
    NetworkInfo info;
    std::vector<HistoryEntry> history;
  };
  Report report() const {
    std::lock_guard lock(mu_);
    return {info_locked(), history_};
  }

  std::vector<HistoryEntry> metrics_history() const {
    std::lock_guard lock(mu_);
    return history_;
  }

  Snapshot snapshot() const {
    std::lock_guard lock(mu_);
    return {status_, current_epoch_, log_.size(), params_, history_};
  }

  /// Retained events with seq >= `from`.
  std::vector<trace::TrainingEvent> events_from(std::uint64_t from) const {
    std::lock_guard lock(mu_);
    if (from >= log_.size()) return {};
    return {log_.begin() + static_cast<std::ptrdiff_t>(from), log_.end()};
  }

  /// Monotone counter bumped on every event and status change.
  std::uint64_t version() const {
    std::lock_guard lock(mu_);
    return version_;
  }

  /// Blocks until version() differs from `seen` or the timeout passes.
  std::uint64_t wait_changed(std::uint64_t seen, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return version_ != seen; });
    return version_;
  }

 private:
  NetworkInfo info_locked() const {
    NetworkInfo info;
    const auto& schema = dataset_.schema;
    info.dataset = {dataset_.name, dataset_.samples(), dataset_.split.train.size(),
                    dataset_.split.val.size(), schema.feature_names, schema.target_name,
                    schema.task, schema.class_labels};
    info.architecture.layer_sizes = config_.layer_sizes;
    info.architecture.hidden_layers = config_.layer_sizes.size() - 2;
    info.architecture.hidden_activation = to_string(config_.activation);
    info.architecture.output_activation =
        config_.task == TaskKind::Classification ? "softmax" : "identity";
    info.training = {status_, current_epoch_, config_.epochs, log_.size(), stop_reason_};
    info.hyperparameters.learning_rate = config_.learning_rate;
    info.hyperparameters.epochs = config_.epochs;
    info.hyperparameters.seed = config_.seed;
    info.model.parameter_count = params_.parameter_count();
    std::size_t n = 0;
    double sum = 0.0;
    for (const auto& w : params_.weights)
      for (double v : w.flat()) {
        sum += std::abs(v);
        info.model.max_abs_weight = std::max(info.model.max_abs_weight, std::abs(v));
        ++n;
      }
    info.model.mean_abs_weight = n ? sum / static_cast<double>(n) : 0.0;
    if (!history_.empty()) info.model.latest_metrics = history_.back().metrics;
    info.current_epoch = current_epoch_;
    return info;
  }

  void bump() {
    ++version_;
    cv_.notify_all();
  }

  // Caller holds mu_.
  void apply(const trace::TrainingEvent& event) {
    if (const auto* u = std::get_if<trace::WeightsUpdated>(&event.payload)) {
      params_.weights[u->layer - 1] = u->w_post;
      params_.biases[u->layer - 1] = u->b_post;
    } else if (const auto* end = std::get_if<trace::EpochEnd>(&event.payload)) {
      history_.push_back({event.epoch, end->metrics});
      ++current_epoch_;
      if (current_epoch_ >= config_.epochs) status_ = SessionStatus::Completed;
    }
  }

  const std::string id_;
  const data::Dataset dataset_;
  const NetworkConfig config_;
  const SessionOptions options_;
  trace::Batch train_;
  trace::Batch val_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  SessionStatus status_ = SessionStatus::Idle;
  NetworkParams params_;  // reflects every WeightsUpdated emitted so far
  std::uint32_t current_epoch_ = 0;
  std::vector<HistoryEntry> history_;
  std::vector<trace::TrainingEvent> log_;  // index == seq
  std::deque<trace::TrainingEvent> pending_;
  std::uint64_t version_ = 0;
  std::string stop_reason_;
};

inline std::string next_session_id() {
  static std::atomic<std::uint64_t> counter{0};
  return "s" + std::to_string(++counter);
}

/// Validates against the dataset and builds an Idle session with
/// init_params(config, config.seed). Throws ConfigInvalid.
inline std::shared_ptr<Session> create_session(data::Dataset dataset, NetworkConfig config,
                                               SessionOptions options = {}) {
  return std::make_shared<Session>(next_session_id(), std::move(dataset), std::move(config), options);
}

}  // namespace nntrace::session
