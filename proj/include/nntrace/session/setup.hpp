#pragma once

// Turning user-facing run settings (hidden sizes, activation, ...) into a
// NetworkConfig and a split dataset. The server and the CLI both go through
// here, so the same settings give the same trace on either surface.

#include <cstdint>
#include <optional>
#include <vector>

#include "nntrace/core/network.hpp"
#include "nntrace/data/dataset.hpp"

namespace nntrace::session {

struct RunSpec {
  std::vector<std::size_t> hidden_layers{8};
  std::optional<std::vector<std::size_t>> layer_sizes;  // full override, input..output
  ActivationKind activation = ActivationKind::Sigmoid;
  double learning_rate = 0.5;
  std::uint32_t epochs = 100;
  std::uint64_t seed = 7;
  std::optional<TaskKind> task;  // defaults to the dataset's task
  double val_fraction = 0.2;
};

/// Input size is the feature count; output size is the class count, or 1
/// for regression.
inline NetworkConfig make_config(const data::Dataset& dataset, const RunSpec& spec) {
  NetworkConfig config;
  if (spec.layer_sizes) {
    config.layer_sizes = *spec.layer_sizes;
  } else {
    config.layer_sizes.push_back(dataset.feature_count());
    config.layer_sizes.insert(config.layer_sizes.end(), spec.hidden_layers.begin(), spec.hidden_layers.end());
    config.layer_sizes.push_back(dataset.schema.output_size());
  }
  config.activation = spec.activation;
  config.learning_rate = spec.learning_rate;
  config.epochs = spec.epochs;
  config.task = spec.task.value_or(dataset.schema.task);
  config.seed = spec.seed;
  return config;
}

/// The split is seeded with the run seed.
inline data::Dataset prepare_dataset(const data::Dataset& dataset, const RunSpec& spec) {
  return data::split(dataset, spec.val_fraction, spec.seed);
}

}  // namespace nntrace::session
