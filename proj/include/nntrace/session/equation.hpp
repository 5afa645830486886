#pragma once

// Per-neuron weighted-sum equations, e.g.
//   o1 = softmax(0.45·h1 + 0.28·h2 + 0.16)
// Coefficients and the bias are printed with two decimals; negative values
// after the first term are written with " - ".

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nntrace/core/network.hpp"
#include "nntrace/error.hpp"

namespace nntrace::session {

inline constexpr std::string_view kTimes = "·";

struct EquationTerm {
  double coefficient = 0.0;
  std::string input_label;
  friend bool operator==(const EquationTerm&, const EquationTerm&) = default;
};

struct NeuronEquation {
  std::string neuron_label;
  std::vector<EquationTerm> terms;
  double bias = 0.0;
  std::string wrapper;  // activation name, "softmax", or empty
  std::string rendered;
};

/// Neuron labels: inputs use feature names, hidden neurons h1, h2, ...
/// (h<layer>_<index> when there is more than one hidden layer), outputs o1, o2, ...
inline std::string neuron_label(const std::vector<std::string>& feature_names,
                                std::size_t total_layers, std::size_t layer, std::size_t index) {
  if (layer == 0) return feature_names.at(index);
  if (layer + 1 == total_layers) return "o" + std::to_string(index + 1);
  if (total_layers == 3) return "h" + std::to_string(index + 1);
  return "h" + std::to_string(layer) + "_" + std::to_string(index + 1);
}

namespace equation_detail {

/// Two-decimal magnitude; the sign is handled by the caller.
inline std::string fixed2(double magnitude) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", magnitude);
  return buf;
}

inline bool rounds_negative(double v) { return fixed2(std::abs(v)) != "0.00" && v < 0.0; }

inline void append_signed(std::string& out, double value, bool first) {
  const bool negative = rounds_negative(value);
  if (first)
    out += negative ? "-" : "";
  else
    out += negative ? " - " : " + ";
  out += fixed2(std::abs(value));
}

}  // namespace equation_detail

inline std::string render_equation(const NeuronEquation& eq) {
  using namespace equation_detail;
  std::string body;
  for (std::size_t i = 0; i < eq.terms.size(); ++i) {
    append_signed(body, eq.terms[i].coefficient, i == 0);
    body += kTimes;
    body += eq.terms[i].input_label;
  }
  append_signed(body, eq.bias, eq.terms.empty());
  std::string out = eq.neuron_label + " = ";
  if (eq.wrapper.empty()) return out + body;
  return out + eq.wrapper + "(" + body + ")";
}

/// Builds the equation of neuron `index` in weight layer `layer` (1-based).
inline NeuronEquation make_equation(const NetworkParams& params, const NetworkConfig& config,
                                    const std::vector<std::string>& feature_names,
                                    std::size_t layer, std::size_t index) {
  if (layer < 1 || layer > params.layers())
    throw ShapeError("layer " + std::to_string(layer) + " has no equation (valid: 1.." +
                     std::to_string(params.layers()) + ")");
  const Matrix& w = params.weights[layer - 1];
  if (index >= w.rows())
    throw ShapeError("neuron " + std::to_string(index) + " out of range for layer " +
                     std::to_string(layer) + " (size " + std::to_string(w.rows()) + ")");
  const std::size_t total = config.layer_sizes.size();
  NeuronEquation eq;
  eq.neuron_label = neuron_label(feature_names, total, layer, index);
  for (std::size_t j = 0; j < w.cols(); ++j)
    eq.terms.push_back({w(index, j), neuron_label(feature_names, total, layer - 1, j)});
  eq.bias = params.biases[layer - 1][index];
  if (layer < params.layers())
    eq.wrapper = to_string(config.activation);
  else if (config.task == TaskKind::Classification)
    eq.wrapper = "softmax";
  eq.rendered = render_equation(eq);
  return eq;
}

/// Inverse of render_equation at two-decimal precision.
inline NeuronEquation parse_equation(std::string_view text) {
  auto fail = [&](const std::string& why) -> NeuronEquation {
    throw InputError("cannot parse equation '" + std::string(text) + "': " + why);
  };
  const auto eq_pos = text.find(" = ");
  if (eq_pos == std::string_view::npos) return fail("missing ' = '");
  NeuronEquation eq;
  eq.neuron_label = std::string(text.substr(0, eq_pos));
  std::string_view body = text.substr(eq_pos + 3);
  const auto paren = body.find('(');
  if (paren != std::string_view::npos && !body.empty() && body.back() == ')') {
    eq.wrapper = std::string(body.substr(0, paren));
    body = body.substr(paren + 1, body.size() - paren - 2);
  }

  // Split into signed chunks at " + " / " - ".
  std::vector<std::pair<double, std::string_view>> chunks;
  double sign = 1.0;
  if (!body.empty() && body.front() == '-') {
    sign = -1.0;
    body.remove_prefix(1);
  }
  while (true) {
    const auto plus = body.find(" + ");
    const auto minus = body.find(" - ");
    const auto cut = std::min(plus, minus);
    chunks.emplace_back(sign, body.substr(0, cut));
    if (cut == std::string_view::npos) break;
    sign = cut == minus ? -1.0 : 1.0;
    body.remove_prefix(cut + 3);
  }
  auto number = [&](std::string_view s) {
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (end == tmp.c_str() || *end != '\0') fail("bad number '" + tmp + "'");
    return v;
  };
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto [s, chunk] = chunks[i];
    if (i + 1 == chunks.size()) {
      eq.bias = s * number(chunk);
      break;
    }
    const auto dot = chunk.find(kTimes);
    if (dot == std::string_view::npos) return fail("term without '·'");
    eq.terms.push_back({s * number(chunk.substr(0, dot)), std::string(chunk.substr(dot + kTimes.size()))});
  }
  eq.rendered = std::string(text);
  return eq;
}

}  // namespace nntrace::session
