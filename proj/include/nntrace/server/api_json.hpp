#pragma once

// JSON shapes of the HTTP API bodies. Event lines themselves come from the
// trace codec so the stream carries exactly the trace file format.

#include <optional>
#include <string>
#include <vector>

#include "nntrace/data/dataset.hpp"
#include "nntrace/session/session.hpp"
#include "nntrace/session/setup.hpp"
#include "nntrace/trace/codec.hpp"
#include "nntrace/trace/edge_weights.hpp"

namespace nntrace::server {

using trace::Json;

inline Json metrics_json(const Metrics& m) {
  Json j;
  j["loss"] = m.loss;
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  if (m.val_loss) j["val_loss"] = *m.val_loss;
  if (m.val_accuracy) j["val_accuracy"] = *m.val_accuracy;
  return j;
}

inline Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (const auto& r : m.to_rows()) rows.push_back(r);
  return rows;
}

inline Json params_json(const NetworkParams& p) {
  Json weights = Json::array();
  Json biases = Json::array();
  for (std::size_t l = 0; l < p.layers(); ++l) {
    weights.push_back(matrix_json(p.weights[l]));
    biases.push_back(p.biases[l]);
  }
  return Json{{"weights", weights}, {"biases", biases}};
}

inline Json history_json(const std::vector<session::HistoryEntry>& history) {
  Json out = Json::array();
  for (const auto& h : history) {
    Json row = metrics_json(h.metrics);
    row["epoch"] = h.epoch;
    out.push_back(std::move(row));
  }
  return out;
}

inline Json summary_json(const data::DatasetSummary& s) {
  Json j;
  j["samples"] = s.samples;
  j["features"] = s.feature_names.size();
  j["feature_names"] = s.feature_names;
  j["target"] = s.target_name;
  j["task"] = to_string(s.task);
  if (s.task == TaskKind::Classification) {
    j["classes"] = s.class_labels.size();
    j["class_labels"] = s.class_labels;
  }
  return j;
}

inline Json dataset_json(const std::string& id, const data::Dataset& ds, bool builtin) {
  return Json{{"id", id}, {"name", ds.name}, {"builtin", builtin}, {"summary", summary_json(data::summarize(ds))}};
}

inline Json config_json(const NetworkConfig& c, const session::RunSpec& spec) {
  std::vector<std::size_t> hidden(c.layer_sizes.begin() + 1, c.layer_sizes.end() - 1);
  return Json{{"layer_sizes", c.layer_sizes},     {"hidden_layers", hidden},
              {"activation", to_string(c.activation)}, {"learning_rate", c.learning_rate},
              {"epochs", c.epochs},               {"seed", c.seed},
              {"task", to_string(c.task)},        {"val_fraction", spec.val_fraction}};
}

inline Json info_json(const session::NetworkInfo& info) {
  const auto& d = info.dataset;
  Json dataset{{"name", d.name},
               {"samples", d.samples},
               {"train_samples", d.train_samples},
               {"val_samples", d.val_samples},
               {"feature_names", d.feature_names},
               {"target", d.target},
               {"task", to_string(d.task)}};
  if (d.task == TaskKind::Classification) dataset["class_labels"] = d.class_labels;
  const auto& a = info.architecture;
  Json model{{"parameter_count", info.model.parameter_count},
             {"mean_abs_weight", info.model.mean_abs_weight},
             {"max_abs_weight", info.model.max_abs_weight},
             {"latest_metrics", info.model.latest_metrics ? metrics_json(*info.model.latest_metrics) : Json()}};
  return Json{
      {"dataset", dataset},
      {"architecture",
       {{"layer_sizes", a.layer_sizes},
        {"hidden_layers", a.hidden_layers},
        {"hidden_activation", a.hidden_activation},
        {"output_activation", a.output_activation}}},
      {"training",
       {{"status", to_string(info.training.status)},
        {"current_epoch", info.training.current_epoch},
        {"total_epochs", info.training.total_epochs},
        {"events_emitted", info.training.events_emitted},
        {"stop_reason", info.training.stop_reason.empty() ? Json() : Json(info.training.stop_reason)}}},
      {"hyperparameters",
       {{"learning_rate", info.hyperparameters.learning_rate},
        {"epochs", info.hyperparameters.epochs},
        {"seed", info.hyperparameters.seed},
        {"training_regime", info.hyperparameters.training_regime}}},
      {"model", model},
      {"current_epoch", info.current_epoch}};
}

/// First frame of every subscription.
inline Json snapshot_json(const session::Snapshot& s) {
  return Json{{"type", "SNAPSHOT"},
              {"status", to_string(s.status)},
              {"current_epoch", s.current_epoch},
              {"next_seq", s.next_seq},
              {"params", params_json(s.params)},
              {"history", history_json(s.history)}};
}

inline Json prediction_json(const session::Prediction& p) {
  Json j{{"outputs", p.outputs}};
  if (p.label_index) j["label_index"] = *p.label_index;
  if (p.label) j["label"] = *p.label;
  if (p.value) j["value"] = *p.value;
  return j;
}

inline Json equation_json(const session::NeuronEquation& eq) {
  Json terms = Json::array();
  for (const auto& t : eq.terms) terms.push_back({{"coefficient", t.coefficient}, {"input", t.input_label}});
  return Json{{"neuron", eq.neuron_label},
              {"terms", terms},
              {"bias", eq.bias},
              {"wrapper", eq.wrapper},
              {"rendered", eq.rendered}};
}

inline Json edge_weights_json(const std::vector<trace::EdgeRenderLayer>& layers) {
  Json out = Json::array();
  for (const auto& l : layers)
    out.push_back({{"magnitude", matrix_json(l.magnitude)}, {"sign", matrix_json(l.sign)}});
  return out;
}

}  // namespace nntrace::server
