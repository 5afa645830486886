#pragma once

// Line-delimited JSON encoding of training events. One object per line,
// `type` first, then `seq` and `epoch`, then the variant's fields. The
// format is documented in docs/protocol.md.

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nntrace/trace/event.hpp"

namespace nntrace::trace {

using Json = nlohmann::ordered_json;

namespace codec_detail {

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    rows.push_back(Json(std::vector<double>(r.begin(), r.end())));
  }
  return rows;
}

inline Json to_json(const Metrics& m) {
  Json j;
  j["loss"] = m.loss;
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  if (m.val_loss) j["val_loss"] = *m.val_loss;
  if (m.val_accuracy) j["val_accuracy"] = *m.val_accuracy;
  return j;
}

struct Reader {
  const Json& obj;
  std::size_t line;

  [[noreturn]] void error(const std::string& message) const { throw ParseError(message, line); }

  const Json& field(const char* name) const {
    const auto it = obj.find(name);
    if (it == obj.end()) error(std::string("missing field '") + name + "'");
    return *it;
  }

  double number(const Json& j, const char* name) const {
    if (!j.is_number()) error(std::string("field '") + name + "' must be a number");
    return j.get<double>();
  }
  double number(const char* name) const { return number(field(name), name); }

  std::uint64_t unsigned_int(const char* name) const {
    const Json& j = field(name);
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
      error(std::string("field '") + name + "' must be a non-negative integer");
    return j.get<std::uint64_t>();
  }

  std::uint32_t u32(const char* name) const {
    const auto v = unsigned_int(name);
    if (v > 0xFFFFFFFFULL) error(std::string("field '") + name + "' out of range");
    return static_cast<std::uint32_t>(v);
  }

  Vector vector(const Json& j, const char* name) const {
    if (!j.is_array()) error(std::string("field '") + name + "' must be an array");
    Vector out;
    out.reserve(j.size());
    for (const auto& v : j) out.push_back(number(v, name));
    return out;
  }
  Vector vector(const char* name) const { return vector(field(name), name); }

  Matrix matrix(const Json& j, const char* name) const {
    if (!j.is_array()) error(std::string("field '") + name + "' must be an array of rows");
    std::vector<Vector> rows;
    for (const auto& r : j) rows.push_back(vector(r, name));
    for (const auto& r : rows)
      if (r.size() != rows.front().size()) error(std::string("field '") + name + "' is not rectangular");
    return Matrix::from_rows(rows);
  }
  Matrix matrix(const char* name) const { return matrix(field(name), name); }

  std::vector<Vector> rows(const char* name) const {
    const Json& j = field(name);
    if (!j.is_array()) error(std::string("field '") + name + "' must be an array");
    std::vector<Vector> out;
    for (const auto& r : j) out.push_back(vector(r, name));
    return out;
  }

  Metrics metrics() const {
    const Json& m = field("metrics");
    if (!m.is_object()) error("field 'metrics' must be an object");
    Reader inner{m, line};
    Metrics out;
    out.loss = inner.number("loss");
    if (m.contains("accuracy")) out.accuracy = inner.number("accuracy");
    if (m.contains("val_loss")) out.val_loss = inner.number("val_loss");
    if (m.contains("val_accuracy")) out.val_accuracy = inner.number("val_accuracy");
    return out;
  }
};

}  // namespace codec_detail

inline Json event_to_json(const TrainingEvent& event) {
  using codec_detail::to_json;
  Json j;
  j["type"] = std::string(type_name(event));
  j["seq"] = event.seq;
  j["epoch"] = event.epoch;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ForwardPulse>) {
          j["from_layer"] = p.from_layer;
          j["to_layer"] = p.to_layer;
          j["edge_weights"] = to_json(p.edge_weights);
        } else if constexpr (std::is_same_v<T, ActivationsComputed>) {
          j["layer"] = p.layer;
          j["values"] = p.values;
        } else if constexpr (std::is_same_v<T, OutputProduced>) {
          j["values"] = p.values;
          j["samples"] = p.samples;
        } else if constexpr (std::is_same_v<T, LossComputed>) {
          j["loss"] = p.loss;
        } else if constexpr (std::is_same_v<T, BackwardPulse>) {
          j["into_layer"] = p.into_layer;
          j["deltas"] = p.deltas;
        } else if constexpr (std::is_same_v<T, WeightsUpdated>) {
          j["layer"] = p.layer;
          j["learning_rate"] = p.learning_rate;
          j["w_pre"] = to_json(p.w_pre);
          j["w_post"] = to_json(p.w_post);
          j["b_pre"] = p.b_pre;
          j["b_post"] = p.b_post;
          j["grad_w"] = to_json(p.grad_w);
          j["grad_b"] = p.grad_b;
        } else if constexpr (std::is_same_v<T, EpochEnd>) {
          j["metrics"] = to_json(p.metrics);
        }
      },
      event.payload);
  return j;
}

/// One line, no trailing newline.
inline std::string serialize_event(const TrainingEvent& event) { return event_to_json(event).dump(); }

inline TrainingEvent event_from_json(const Json& j, std::size_t line = 0) {
  if (!j.is_object()) throw ParseError("event must be a JSON object", line);
  const codec_detail::Reader in{j, line};
  const Json& type_field = in.field("type");
  if (!type_field.is_string()) in.error("field 'type' must be a string");
  const auto type = type_field.get<std::string>();

  TrainingEvent e;
  e.seq = in.unsigned_int("seq");
  e.epoch = in.u32("epoch");
  if (type == "EPOCH_START") {
    e.payload = EpochStart{};
  } else if (type == "FORWARD_PULSE") {
    e.payload = ForwardPulse{in.u32("from_layer"), in.u32("to_layer"), in.matrix("edge_weights")};
  } else if (type == "ACTIVATIONS_COMPUTED") {
    e.payload = ActivationsComputed{in.u32("layer"), in.vector("values")};
  } else if (type == "OUTPUT_PRODUCED") {
    e.payload = OutputProduced{in.vector("values"), in.rows("samples")};
  } else if (type == "LOSS_COMPUTED") {
    e.payload = LossComputed{in.number("loss")};
  } else if (type == "BACKWARD_PULSE") {
    e.payload = BackwardPulse{in.u32("into_layer"), in.vector("deltas")};
  } else if (type == "WEIGHTS_UPDATED") {
    e.payload = WeightsUpdated{in.u32("layer"),     in.number("learning_rate"), in.matrix("w_pre"),
                               in.matrix("w_post"), in.vector("b_pre"),         in.vector("b_post"),
                               in.matrix("grad_w"), in.vector("grad_b")};
  } else if (type == "EPOCH_END") {
    e.payload = EpochEnd{in.metrics()};
  } else {
    in.error("unknown event type '" + type + "'");
  }
  return e;
}

inline TrainingEvent deserialize_event(std::string_view line, std::size_t line_number = 0) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ParseError(std::string("malformed JSON: ") + ex.what(), line_number);
  }
  return event_from_json(j, line_number);
}

inline void write_trace(std::ostream& out, const std::vector<TrainingEvent>& events) {
  for (const auto& e : events) out << serialize_event(e) << '\n';
}

/// Reads a whole trace; blank lines are ignored and every line must end in
/// a newline. Line numbers in errors are 1-based.
inline std::vector<TrainingEvent> read_trace(std::istream& in) {
  std::vector<TrainingEvent> events;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (in.eof() && !line.empty()) throw ParseError("truncated line (no terminating newline)", number);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    events.push_back(deserialize_event(line, number));
  }
  return events;
}

}  // namespace nntrace::trace
