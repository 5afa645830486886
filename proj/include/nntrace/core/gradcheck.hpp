#pragma once

// Central-difference gradient oracle. Only forward() and loss() are used
// here so the result is independent of backward().

#include <algorithm>
#include <cmath>
#include <span>

#include "nntrace/core/network.hpp"

namespace nntrace {

inline Gradients finite_diff_gradients(const NetworkParams& params, std::span<const double> x,
                                       std::span<const double> target,
                                       const NetworkConfig& config, double eps = 1e-5) {
  NetworkParams probe = params;
  auto loss_at = [&]() { return loss(config.task, forward(probe, x, config).output(), target); };
  auto central = [&](double& slot) {
    const double saved = slot;
    slot = saved + eps;
    const double up = loss_at();
    slot = saved - eps;
    const double down = loss_at();
    slot = saved;
    return (up - down) / (2.0 * eps);
  };

  Gradients g;
  for (std::size_t l = 0; l < params.layers(); ++l) {
    Matrix dw(params.weights[l].rows(), params.weights[l].cols());
    auto w = probe.weights[l].flat();
    auto out = dw.flat();
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = central(w[i]);
    Vector db(params.biases[l].size());
    for (std::size_t i = 0; i < db.size(); ++i) db[i] = central(probe.biases[l][i]);
    g.weights.push_back(std::move(dw));
    g.biases.push_back(std::move(db));
  }
  return g;
}

/// Which parameters sit near a ReLU kink for this input: a parameter feeding
/// neuron (l, i) is excluded when (l, i) or any neuron in a later hidden layer
/// has |z| below `threshold`. Returned as a mask with the shape of Gradients
/// (1.0 = compare, 0.0 = skip).
inline Gradients kink_mask(const NetworkParams& params, std::span<const double> x,
                           const NetworkConfig& config, double threshold = 1e-3) {
  const ForwardTrace trace = forward(params, x, config);
  const std::size_t layers = params.layers();
  Gradients mask;
  bool later_kink = false;  // any kinked hidden neuron in a layer after the current one
  mask.weights.resize(layers);
  mask.biases.resize(layers);
  for (std::size_t l = layers; l >= 1; --l) {
    const bool hidden = l < layers && config.activation == ActivationKind::ReLU;
    Matrix mw(params.weights[l - 1].rows(), params.weights[l - 1].cols(), 1.0);
    Vector mb(params.biases[l - 1].size(), 1.0);
    bool kink_here = false;
    for (std::size_t i = 0; i < mb.size(); ++i) {
      const bool kinked = hidden && std::abs(trace.pre[l][i]) < threshold;
      kink_here = kink_here || kinked;
      if (kinked || later_kink) {
        mb[i] = 0.0;
        for (double& v : mw.row(i)) v = 0.0;
      }
    }
    later_kink = later_kink || kink_here;
    mask.weights[l - 1] = std::move(mw);
    mask.biases[l - 1] = std::move(mb);
  }
  return mask;
}

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries
/// that are zero in both routes from dividing by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) noexcept {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

/// Largest relative error over all weights and biases, honoring an optional mask.
inline double max_relative_error(const Gradients& analytic, const Gradients& numeric,
                                 const Gradients* mask = nullptr) {
  double worst = 0.0;
  for (std::size_t l = 0; l < analytic.weights.size(); ++l) {
    const auto a = analytic.weights[l].flat();
    const auto n = numeric.weights[l].flat();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (mask && mask->weights[l].flat()[i] == 0.0) continue;
      worst = std::max(worst, relative_error(a[i], n[i]));
    }
    for (std::size_t i = 0; i < analytic.biases[l].size(); ++i) {
      if (mask && mask->biases[l][i] == 0.0) continue;
      worst = std::max(worst, relative_error(analytic.biases[l][i], numeric.biases[l][i]));
    }
  }
  return worst;
}

}  // namespace nntrace
