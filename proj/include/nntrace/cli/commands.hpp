#pragma once

// Headless commands: train, validate, inspect, predict.
//
// Exit codes: 0 ok, 1 trace validation failed, 2 configuration or input
// error, 3 data or trace-file error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nntrace/data/builtin.hpp"
#include "nntrace/session/session.hpp"
#include "nntrace/session/setup.hpp"
#include "nntrace/trace/codec.hpp"
#include "nntrace/trace/epoch.hpp"
#include "nntrace/trace/replay.hpp"
#include "nntrace/trace/validate.hpp"

namespace nntrace::cli {

enum ExitCode : int { kOk = 0, kValidationFailed = 1, kConfigError = 2, kDataError = 3 };

namespace cli_detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt4(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != item.size() || item.front() == '-')
      throw ConfigError("--layers expects a comma list of sizes, got '" + text + "'", "layer_sizes");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

inline Vector parse_inputs(const std::string& text) {
  Vector out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    while (pos < item.size() && item[pos] == ' ') ++pos;
    if (pos == 0 || pos != item.size()) throw InputError("--inputs expects comma-separated numbers, got '" + text + "'");
    out.push_back(v);
  }
  return out;
}

/// Built-in name or CSV path; file datasets are named after the file stem.
inline data::Dataset load_dataset(const std::string& ref, const std::optional<std::string>& target) {
  if (auto builtin = data::builtin(ref)) {
    if (!target) return *builtin;
    return data::load_csv(ref == "iris" ? data::iris_csv() : data::diabetes_csv(), ref, target);
  }
  std::ifstream in(ref, std::ios::binary);
  if (!in) throw DataError("cannot read dataset '" + ref + "' (not a built-in name or readable file)");
  std::ostringstream text;
  text << in.rdbuf();
  std::string name = ref;
  if (const auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
  if (const auto dot = name.rfind('.'); dot != std::string::npos && dot > 0) name = name.substr(0, dot);
  return data::load_csv(text.str(), name, target);
}

inline std::vector<trace::TrainingEvent> load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read trace file '" + path + "'");
  return trace::read_trace(in);
}

/// Flags shared by every command that needs a dataset and a network.
struct RunFlags {
  std::string dataset;
  std::optional<std::string> target;
  std::string layers = "8";
  std::string activation = "sigmoid";
  double lr = 0.5;
  std::uint32_t epochs = 100;
  std::uint64_t seed = 7;
  double val_fraction = 0.2;

  void attach(CLI::App& cmd, bool dataset_required) {
    auto* d = cmd.add_option("--dataset", dataset, "built-in name (iris, diabetes) or CSV path");
    if (dataset_required) d->required();
    cmd.add_option("--target", target, "target column (default: last column)");
    cmd.add_option("--layers", layers, "hidden layer sizes, comma separated ('none' for no hidden layer)")
        ->capture_default_str();
    cmd.add_option("--activation", activation, "hidden activation: sigmoid or relu")->capture_default_str();
    cmd.add_option("--lr", lr, "learning rate")->capture_default_str();
    cmd.add_option("--epochs", epochs, "training epochs")->capture_default_str();
    cmd.add_option("--seed", seed, "seed for initialization and the train/validation split")->capture_default_str();
    cmd.add_option("--val-fraction", val_fraction, "fraction of rows held out for validation")
        ->capture_default_str();
  }

  session::RunSpec spec() const {
    session::RunSpec s;
    s.hidden_layers = parse_sizes(layers);
    s.activation = parse_activation(activation);
    s.learning_rate = lr;
    s.epochs = epochs;
    s.seed = seed;
    s.val_fraction = val_fraction;
    return s;
  }
};

/// Prepared dataset plus a validated config.
struct Prepared {
  data::Dataset dataset;
  NetworkConfig config;
};

inline Prepared prepare(const RunFlags& flags) {
  const auto spec = flags.spec();
  const auto source = load_dataset(flags.dataset, flags.target);
  Prepared p{session::prepare_dataset(source, spec), {}};
  p.config = session::make_config(p.dataset, spec);
  if (auto violations = session::validate_config(p.dataset, p.config); !violations.empty())
    throw session::ConfigInvalid(std::move(violations));
  return p;
}

inline void write_metrics_header(std::ostream& out) { out << "epoch,loss,accuracy,val_loss,val_accuracy\n"; }

inline void write_metrics_row(std::ostream& out, std::uint32_t epoch, const Metrics& m) {
  auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  out << epoch << ',' << fmt(m.loss) << ',' << cell(m.accuracy) << ',' << cell(m.val_loss) << ','
      << cell(m.val_accuracy) << '\n';
}

inline std::string describe_metrics(const Metrics& m) {
  std::string s = "loss " + fmt4(m.loss);
  if (m.accuracy) s += ", accuracy " + fmt4(*m.accuracy);
  if (m.val_loss) s += ", val_loss " + fmt4(*m.val_loss);
  if (m.val_accuracy) s += ", val_accuracy " + fmt4(*m.val_accuracy);
  return s;
}

/// Trains epoch by epoch, streaming events to `trace_out` as they are produced.
inline NetworkParams train(const Prepared& p, std::ostream* trace_out, std::ostream* metrics_out,
                           std::optional<Metrics>* last = nullptr) {
  const auto train_batch = trace::train_batch(p.dataset);
  const auto val_batch = trace::val_batch(p.dataset);
  const trace::Batch* val = val_batch.empty() ? nullptr : &val_batch;
  NetworkParams params = init_params(p.config, p.config.seed);
  std::uint64_t seq = 0;
  if (metrics_out) write_metrics_header(*metrics_out);
  for (std::uint32_t epoch = 0; epoch < p.config.epochs; ++epoch) {
    auto result = trace::run_epoch(params, p.config, train_batch, val, epoch, seq);
    if (!result.finite())
      throw ConfigError("training diverged in epoch " + std::to_string(epoch) +
                            " (non-finite loss or weights); try a lower learning rate",
                        "learning_rate");
    seq += result.events.size();
    if (trace_out) trace::write_trace(*trace_out, result.events);
    if (metrics_out) write_metrics_row(*metrics_out, epoch, result.metrics);
    if (last) *last = result.metrics;
    params = std::move(result.params);
  }
  return params;
}

/// Parameters as of the start of `epoch` (from its w_pre/b_pre snapshots),
/// or after the last update when `epoch` is empty.
inline NetworkParams params_from_trace(const std::vector<trace::TrainingEvent>& events,
                                       const std::optional<std::uint32_t>& epoch) {
  NetworkParams params;
  bool found = false;
  for (const auto& e : events) {
    const auto* u = std::get_if<trace::WeightsUpdated>(&e.payload);
    if (!u || (epoch && e.epoch != *epoch)) continue;
    if (params.weights.size() < u->layer) {
      params.weights.resize(u->layer);
      params.biases.resize(u->layer);
    }
    params.weights[u->layer - 1] = epoch ? u->w_pre : u->w_post;
    params.biases[u->layer - 1] = epoch ? u->b_pre : u->b_post;
    found = true;
  }
  if (!found)
    throw ParseError(epoch ? "trace has no updates in epoch " + std::to_string(*epoch) : "trace has no weight updates");
  return params;
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------

inline int cmd_train(const cli_detail::RunFlags& flags, const std::string& trace_path,
                     const std::string& metrics_path, std::ostream& out) {
  using namespace cli_detail;
  const Prepared p = prepare(flags);
  std::ofstream trace_file, metrics_file;
  if (!trace_path.empty()) {
    trace_file.open(trace_path, std::ios::binary | std::ios::trunc);
    if (!trace_file) throw DataError("cannot write trace file '" + trace_path + "'");
  }
  if (!metrics_path.empty()) {
    metrics_file.open(metrics_path, std::ios::binary | std::ios::trunc);
    if (!metrics_file) throw DataError("cannot write metrics file '" + metrics_path + "'");
  }
  std::optional<Metrics> last;
  train(p, trace_path.empty() ? nullptr : &trace_file, metrics_path.empty() ? nullptr : &metrics_file, &last);
  out << "trained " << p.dataset.name << " for " << p.config.epochs << " epochs\n";
  if (last) out << "final: " << describe_metrics(*last) << "\n";
  return kOk;
}

inline int cmd_validate(const std::string& trace_path, const std::optional<cli_detail::RunFlags>& replay,
                        std::ostream& out) {
  using namespace cli_detail;
  const auto events = load_trace(trace_path);
  if (const auto v = trace::validate_trace(events)) {
    out << "INVALID " << v->describe() << "\n";
    return kValidationFailed;
  }
  out << "ok: " << events.size() << " events, structure valid\n";
  if (!replay) {
    out << "replay: skipped (pass --dataset and the run flags to recompute payloads)\n";
    return kOk;
  }
  if (events.empty()) return kOk;
  // Layer sizes come from the trace itself; the dataset and flags supply the rest.
  const auto initial = params_from_trace(events, events.front().epoch);
  session::RunSpec spec = replay->spec();
  std::vector<std::size_t> sizes{initial.weights.front().cols()};
  for (const auto& w : initial.weights) sizes.push_back(w.rows());
  spec.layer_sizes = sizes;
  const auto source = load_dataset(replay->dataset, replay->target);
  const auto ds = session::prepare_dataset(source, spec);
  const auto config = session::make_config(ds, spec);
  if (auto violations = session::validate_config(ds, config); !violations.empty())
    throw session::ConfigInvalid(std::move(violations));
  const auto train_batch = trace::train_batch(ds);
  const auto val_batch = trace::val_batch(ds);
  if (const auto m = trace::replay_trace(events, config, train_batch, val_batch.empty() ? nullptr : &val_batch)) {
    out << "INVALID " << m->describe() << "\n";
    return kValidationFailed;
  }
  out << "replay: every payload reproduced within " << fmt(trace::kReplayTolerance) << "\n";
  return kOk;
}

inline int cmd_inspect(const std::string& ref, const std::optional<std::string>& target, std::ostream& out) {
  const auto ds = cli_detail::load_dataset(ref, target);
  const auto s = data::summarize(ds);
  out << "dataset: " << ds.name << "\n";
  if (s.task == TaskKind::Classification)
    out << "samples: " << s.samples << ", task: classification, classes: " << s.class_labels.size()
        << ", features: " << s.feature_names.size() << "\n";
  else
    out << "samples: " << s.samples << ", task: regression, features: " << s.feature_names.size() << "\n";
  out << "feature names:";
  for (std::size_t i = 0; i < s.feature_names.size(); ++i) out << (i ? ", " : " ") << s.feature_names[i];
  out << "\ntarget: " << s.target_name << "\n";
  if (s.task == TaskKind::Classification) {
    out << "class labels:";
    for (std::size_t i = 0; i < s.class_labels.size(); ++i) out << (i ? ", " : " ") << s.class_labels[i];
    out << "\n";
  }
  return kOk;
}

inline int cmd_predict(const cli_detail::RunFlags& flags, const std::string& inputs,
                       const std::string& trace_path, const std::optional<std::uint32_t>& at_epoch,
                       std::ostream& out) {
  using namespace cli_detail;
  const Vector raw = parse_inputs(inputs);
  Prepared p;
  NetworkParams params;
  if (trace_path.empty()) {
    p = prepare(flags);
    p.dataset.normalize_input(raw);  // arity check before spending time on training
    params = train(p, nullptr, nullptr);
  } else {
    const auto events = load_trace(trace_path);
    params = params_from_trace(events, at_epoch);
    session::RunSpec spec = flags.spec();
    std::vector<std::size_t> sizes{params.weights.front().cols()};
    for (const auto& w : params.weights) sizes.push_back(w.rows());
    spec.layer_sizes = sizes;
    const auto source = load_dataset(flags.dataset, flags.target);
    p.dataset = session::prepare_dataset(source, spec);
    p.config = session::make_config(p.dataset, spec);
    if (auto violations = session::validate_config(p.dataset, p.config); !violations.empty())
      throw session::ConfigInvalid(std::move(violations));
  }
  const Vector x = p.dataset.normalize_input(raw);
  const Vector y = forward(params, x, p.config).output();
  if (p.config.task == TaskKind::Classification) {
    out << "probabilities:";
    for (std::size_t k = 0; k < y.size(); ++k)
      out << (k ? ", " : " ") << p.dataset.schema.class_labels[k] << "=" << fmt(y[k]);
    out << "\nlabel: " << p.dataset.schema.class_labels[argmax(y)] << "\n";
  } else {
    out << "output: " << fmt(y.front()) << "\n";
    const double value = p.dataset.target_stats ? p.dataset.target_stats->invert(y.front()) : y.front();
    out << "value: " << fmt(value) << "\n";
  }
  return kOk;
}

/// Entry point shared by the binary and the tests. `args` excludes argv[0].
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"nntrace: headless training, trace validation, dataset inspection, prediction"};
  app.name("nntrace");
  app.require_subcommand(1);

  cli_detail::RunFlags train_flags;
  std::string trace_out, metrics_out;
  auto* train = app.add_subcommand("train", "train a network and dump its trace and metrics");
  train_flags.attach(*train, true);
  train->add_option("--out-trace", trace_out, "write the event trace here");
  train->add_option("--out-metrics", metrics_out, "write per-epoch metrics CSV here");

  std::string validate_path;
  cli_detail::RunFlags replay_flags;
  auto* validate = app.add_subcommand("validate", "check a trace file; with --dataset also replay it");
  validate->add_option("trace", validate_path, "trace file")->required();
  replay_flags.attach(*validate, false);

  std::string inspect_ref;
  std::optional<std::string> inspect_target;
  auto* inspect = app.add_subcommand("inspect", "summarize a dataset");
  inspect->add_option("dataset", inspect_ref, "built-in name or CSV path")->required();
  inspect->add_option("--target", inspect_target, "target column (default: last column)");

  cli_detail::RunFlags predict_flags;
  std::string predict_inputs, predict_trace;
  std::optional<std::uint32_t> predict_epoch;
  auto* predict = app.add_subcommand("predict", "run inference on raw feature values");
  predict_flags.attach(*predict, true);
  predict->add_option("--inputs", predict_inputs, "comma-separated raw feature values")->required();
  predict->add_option("--trace", predict_trace, "take weights from this trace instead of training");
  predict->add_option("--at-epoch", predict_epoch, "with --trace: weights at the start of this epoch");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(train_flags, trace_out, metrics_out, out);
    if (*validate)
      return cmd_validate(validate_path,
                          replay_flags.dataset.empty() ? std::nullopt : std::optional(replay_flags), out);
    if (*inspect) return cmd_inspect(inspect_ref, inspect_target, out);
    if (*predict) {
      if (predict_epoch && predict_trace.empty()) throw ConfigError("--at-epoch needs --trace", "at-epoch");
      return cmd_predict(predict_flags, predict_inputs, predict_trace, predict_epoch, out);
    }
  } catch (const DataError& e) {
    err << "error: " << e.what();
    if (e.row()) err << " (row " << e.row() << (e.column().empty() ? "" : ", column " + e.column()) << ")";
    else if (!e.column().empty()) err << " (column " << e.column() << ")";
    err << "\n";
    return kDataError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const Error& e) {  // config, shape, input
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace nntrace::cli
