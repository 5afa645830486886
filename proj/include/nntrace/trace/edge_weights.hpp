#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "nntrace/core/network.hpp"

namespace nntrace::trace {

/// Per-edge display weights for one layer: |w| / max |w| over the whole
/// network, and the sign of w (-1, 0, +1).
struct EdgeRenderLayer {
  Matrix magnitude;
  Matrix sign;
};

inline std::vector<EdgeRenderLayer> edge_render_weights(const NetworkParams& params) {
  double largest = 0.0;
  for (const auto& w : params.weights)
    for (double v : w.flat()) largest = std::max(largest, std::abs(v));
  std::vector<EdgeRenderLayer> out;
  out.reserve(params.layers());
  for (const auto& w : params.weights) {
    EdgeRenderLayer layer{Matrix(w.rows(), w.cols()), Matrix(w.rows(), w.cols())};
    const auto src = w.flat();
    auto mag = layer.magnitude.flat();
    auto sgn = layer.sign.flat();
    for (std::size_t i = 0; i < src.size(); ++i) {
      mag[i] = largest > 0.0 ? std::abs(src[i]) / largest : 0.0;
      sgn[i] = src[i] > 0.0 ? 1.0 : (src[i] < 0.0 ? -1.0 : 0.0);
    }
    out.push_back(std::move(layer));
  }
  return out;
}

}  // namespace nntrace::trace
