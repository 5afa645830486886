#pragma once

// HTTP service: dataset ingestion, session lifecycle, control, prediction and
// a Server-Sent Events stream per session. The stream carries one trace line
// per message, preceded by a single snapshot frame:
//
//   event: snapshot
//   data: {"type":"SNAPSHOT",...}
//
//   id: 0
//   data: {"type":"EPOCH_START","seq":0,"epoch":0}
//
// Each session is advanced by its own worker thread. Handlers only touch the
// session through its locked API, so a control command lands between two
// events and never waits on another session.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>

#include "nntrace/data/builtin.hpp"
#include "nntrace/server/api_json.hpp"
#include "nntrace/session/session.hpp"
#include "nntrace/session/setup.hpp"

namespace nntrace::server {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string static_dir;
  std::size_t max_upload_bytes = 5 * 1024 * 1024;
  std::size_t max_sessions = 16;
  std::chrono::milliseconds event_delay{0};
  std::size_t max_events = 200'000;
  std::size_t http_threads = 32;  // each open stream holds one
  std::chrono::milliseconds heartbeat{15'000};
};

/// Every `code` an error response can carry.
inline const std::vector<std::string>& error_codes() {
  static const std::vector<std::string> codes{
      "BAD_REQUEST",     "CONFIG_INVALID",  "DATASET_MALFORMED", "ILLEGAL_TRANSITION",
      "INPUT_INVALID",   "INTERNAL",        "METHOD_NOT_ALLOWED", "NOT_FOUND",
      "PAYLOAD_TOO_LARGE", "SESSION_LIMIT", "SHAPE_MISMATCH",    "UNSUPPORTED_METRIC"};
  return codes;
}

namespace server_detail {

/// Raised inside handlers; turned into an error body by respond().
struct HttpError : std::runtime_error {
  HttpError(int status, std::string code, const std::string& message, Json detail = Json())
      : std::runtime_error(message), status(status), code(std::move(code)), detail(std::move(detail)) {}
  int status;
  std::string code;
  Json detail;
};

inline void write_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void write_error(httplib::Response& res, int status, const std::string& code,
                        const std::string& message, const Json& detail = Json()) {
  Json body{{"code", code}, {"message", message}};
  if (!detail.is_null()) body["detail"] = detail;
  write_json(res, status, body);
}

inline std::string code_for_status(int status) {
  switch (status) {
    case 404: return "NOT_FOUND";
    case 405: return "METHOD_NOT_ALLOWED";
    case 413: return "PAYLOAD_TOO_LARGE";
    default: return status >= 500 ? "INTERNAL" : "BAD_REQUEST";
  }
}

/// Runs `fn`, mapping library exceptions onto status codes.
template <typename Fn>
void respond(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const HttpError& e) {
    write_error(res, e.status, e.code, e.what(), e.detail);
  } catch (const session::ConfigInvalid& e) {
    Json violations = Json::array();
    for (const auto& v : e.violations()) violations.push_back({{"field", v.field}, {"message", v.message}});
    write_error(res, 400, e.code(), e.what(), {{"violations", violations}});
  } catch (const ConfigError& e) {
    Json violations = Json::array({{{"field", e.field()}, {"message", e.what()}}});
    write_error(res, 400, e.code(), e.what(), {{"violations", violations}});
  } catch (const DataError& e) {
    Json detail = Json::object();
    if (e.row()) detail["row"] = e.row();
    if (!e.column().empty()) detail["column"] = e.column();
    write_error(res, 400, e.code(), e.what(), detail.empty() ? Json() : detail);
  } catch (const StateError& e) {
    write_error(res, 409, e.code(), e.what());
  } catch (const Error& e) {
    write_error(res, 400, e.code(), e.what());
  } catch (const std::exception& e) {
    write_error(res, 500, "INTERNAL", e.what());
  }
}

inline Json parse_body(const httplib::Request& req) {
  Json body;
  try {
    body = Json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw HttpError(400, "BAD_REQUEST", std::string("request body is not valid JSON: ") + e.what());
  }
  if (!body.is_object()) throw HttpError(400, "BAD_REQUEST", "request body must be a JSON object");
  return body;
}

inline std::vector<std::size_t> size_list(const Json& j, const char* field) {
  if (!j.is_array()) throw ConfigError(std::string(field) + " must be an array of integers", field);
  std::vector<std::size_t> out;
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      throw ConfigError(std::string(field) + " must contain non-negative integers", field);
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

inline double number(const Json& j, const char* field) {
  if (!j.is_number()) throw ConfigError(std::string(field) + " must be a number", field);
  return j.get<double>();
}

inline std::uint64_t unsigned_int(const Json& j, const char* field) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0))
    throw ConfigError(std::string(field) + " must be a non-negative integer", field);
  return j.get<std::uint64_t>();
}

inline std::string text(const Json& j, const char* field) {
  if (!j.is_string()) throw ConfigError(std::string(field) + " must be a string", field);
  return j.get<std::string>();
}

/// Missing fields keep the RunSpec defaults; unknown fields are rejected.
inline session::RunSpec parse_run_spec(const Json& config) {
  session::RunSpec spec;
  if (config.is_null()) return spec;
  if (!config.is_object()) throw ConfigError("config must be an object", "config");
  for (const auto& [key, value] : config.items()) {
    if (key == "hidden_layers") {
      spec.hidden_layers = size_list(value, "hidden_layers");
    } else if (key == "layer_sizes") {
      spec.layer_sizes = size_list(value, "layer_sizes");
    } else if (key == "activation") {
      spec.activation = parse_activation(text(value, "activation"));
    } else if (key == "learning_rate") {
      spec.learning_rate = number(value, "learning_rate");
    } else if (key == "epochs") {
      const auto e = unsigned_int(value, "epochs");
      if (e > session::kMaxEpochs) throw ConfigError("epochs must be in [1, 10000]", "epochs");
      spec.epochs = static_cast<std::uint32_t>(e);
    } else if (key == "seed") {
      spec.seed = unsigned_int(value, "seed");
    } else if (key == "task") {
      spec.task = parse_task(text(value, "task"));
    } else if (key == "val_fraction") {
      spec.val_fraction = number(value, "val_fraction");
    } else {
      throw ConfigError("unknown config field '" + key + "'", key);
    }
  }
  return spec;
}

inline std::string sse_frame(const std::optional<std::string>& event, const std::optional<std::uint64_t>& id,
                             const std::string& data) {
  std::string out;
  if (event) out += "event: " + *event + "\n";
  if (id) out += "id: " + std::to_string(*id) + "\n";
  out += "data: " + data + "\n\n";
  return out;
}

}  // namespace server_detail

class Server {
 public:
  explicit Server(ServerOptions options = {}) : options_(std::move(options)) {
    for (const auto& name : data::builtin_names())
      datasets_.emplace(name, DatasetEntry{*data::builtin(name), true});
    configure();
  }

  ~Server() { stop(); }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the listen socket; returns the bound port.
  int bind() {
    if (options_.port == 0) {
      port_ = http_.bind_to_any_port(options_.host);
      if (port_ < 0) throw std::runtime_error("cannot bind " + options_.host);
    } else {
      if (!http_.bind_to_port(options_.host, options_.port))
        throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
      port_ = options_.port;
    }
    return port_;
  }

  /// Blocking accept loop; call bind() first.
  void listen() { http_.listen_after_bind(); }

  /// bind() plus the accept loop on a background thread.
  int start() {
    const int port = bind();
    listener_ = std::thread([this] { listen(); });
    http_.wait_until_ready();
    return port;
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    http_.stop();
    if (listener_.joinable()) listener_.join();
    std::map<std::string, std::shared_ptr<SessionEntry>> sessions;
    {
      std::lock_guard lock(mu_);
      sessions.swap(sessions_);
    }
    for (auto& [id, entry] : sessions) halt(*entry);
  }

  int port() const noexcept { return port_; }
  const ServerOptions& options() const noexcept { return options_; }
  httplib::Server& http() noexcept { return http_; }

 private:
  struct DatasetEntry {
    data::Dataset dataset;
    bool builtin = false;
  };

  struct SessionEntry {
    std::shared_ptr<session::Session> session;
    std::string dataset_id;
    session::RunSpec spec;
    std::chrono::milliseconds delay{0};
    std::atomic<bool> halted{false};
    std::thread worker;
  };

  using Request = httplib::Request;
  using Response = httplib::Response;

  void configure() {
    using namespace server_detail;
    http_.new_task_queue = [n = options_.http_threads] { return new httplib::ThreadPool(n); };
    http_.set_payload_max_length(options_.max_upload_bytes);
    http_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    http_.set_error_handler([](const Request&, Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      write_error(res, res.status, code_for_status(res.status),
                  res.status == 413 ? "request body exceeds the upload limit"
                                    : std::string(httplib::status_message(res.status)));
      return httplib::Server::HandlerResponse::Handled;
    });
    http_.set_exception_handler([](const Request&, Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        write_error(res, 500, "INTERNAL", e.what());
      } catch (...) {
        write_error(res, 500, "INTERNAL", "unknown error");
      }
    });
    if (!options_.static_dir.empty() && !http_.set_mount_point("/", options_.static_dir))
      throw std::runtime_error("static asset directory not found: " + options_.static_dir);

    http_.Get("/health", [](const Request&, Response& res) { write_json(res, 200, {{"status", "ok"}}); });

    http_.Get("/datasets", [this](const Request&, Response& res) { respond(res, [&] { list_datasets(res); }); });
    http_.Post("/datasets", [this](const Request& req, Response& res) {
      respond(res, [&] { upload_dataset(req, res); });
    });
    http_.Get(R"(/datasets/([^/]+))", [this](const Request& req, Response& res) {
      respond(res, [&] {
        std::lock_guard lock(mu_);
        const auto it = datasets_.find(req.matches[1]);
        if (it == datasets_.end()) throw not_found("dataset", req.matches[1]);
        write_json(res, 200, dataset_json(it->first, it->second.dataset, it->second.builtin));
      });
    });

    http_.Get("/sessions", [this](const Request&, Response& res) {
      respond(res, [&] {
        Json list = Json::array();
        for (const auto& entry : all_sessions()) list.push_back(descriptor(*entry));
        write_json(res, 200, {{"sessions", list}});
      });
    });
    http_.Post("/sessions", [this](const Request& req, Response& res) {
      respond(res, [&] { create(req, res); });
    });
    http_.Get(R"(/sessions/([^/]+))", [this](const Request& req, Response& res) {
      respond(res, [&] {
        const auto entry = find_session(req.matches[1]);
        const auto report = entry->session->report();
        write_json(res, 200,
                   {{"session", descriptor(*entry, &report.info)},
                    {"network_info", info_json(report.info)},
                    {"metrics_history", history_json(report.history)}});
      });
    });
    http_.Delete(R"(/sessions/([^/]+))", [this](const Request& req, Response& res) {
      respond(res, [&] {
        std::shared_ptr<SessionEntry> entry;
        {
          std::lock_guard lock(mu_);
          const auto it = sessions_.find(req.matches[1]);
          if (it == sessions_.end()) throw not_found("session", req.matches[1]);
          entry = it->second;
          sessions_.erase(it);
        }
        halt(*entry);
        write_json(res, 200, {{"id", entry->session->id()}, {"deleted", true}});
      });
    });
    http_.Post(R"(/sessions/([^/]+)/control)", [this](const Request& req, Response& res) {
      respond(res, [&] {
        const auto entry = find_session(req.matches[1]);
        const Json body = parse_body(req);
        if (!body.contains("command") || !body["command"].is_string())
          throw HttpError(400, "BAD_REQUEST", "body must contain a string 'command'");
        const auto status = entry->session->control(session::parse_command(body["command"].get<std::string>()));
        write_json(res, 200, {{"id", entry->session->id()}, {"status", to_string(status)}});
      });
    });
    http_.Post(R"(/sessions/([^/]+)/predict)", [this](const Request& req, Response& res) {
      respond(res, [&] {
        const auto entry = find_session(req.matches[1]);
        const Json body = parse_body(req);
        if (!body.contains("inputs") || !body["inputs"].is_array())
          throw InputError("body must contain an 'inputs' array of numbers");
        Vector inputs;
        for (const auto& v : body["inputs"]) {
          if (!v.is_number()) throw InputError("inputs must all be numbers");
          inputs.push_back(v.get<double>());
        }
        write_json(res, 200, prediction_json(entry->session->predict(inputs)));
      });
    });
    http_.Get(R"(/sessions/([^/]+)/equations?)", [this](const Request& req, Response& res) {
      respond(res, [&] { equations(req, res); });
    });
    http_.Get(R"(/sessions/([^/]+)/edge-weights)", [this](const Request& req, Response& res) {
      respond(res, [&] {
        const auto entry = find_session(req.matches[1]);
        write_json(res, 200, {{"layers", edge_weights_json(trace::edge_render_weights(entry->session->params()))}});
      });
    });
    http_.Get(R"(/sessions/([^/]+)/events)", [this](const Request& req, Response& res) {
      respond(res, [&] { subscribe(req, res); });
    });
  }

  static server_detail::HttpError not_found(const std::string& what, const std::string& id) {
    return {404, "NOT_FOUND", "no " + what + " with id '" + id + "'"};
  }

  std::shared_ptr<SessionEntry> find_session(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw not_found("session", id);
    return it->second;
  }

  std::vector<std::shared_ptr<SessionEntry>> all_sessions() const {
    std::lock_guard lock(mu_);
    std::vector<std::shared_ptr<SessionEntry>> out;
    for (const auto& [id, e] : sessions_) out.push_back(e);
    return out;
  }

  static Json descriptor(const SessionEntry& entry, const session::NetworkInfo* info = nullptr) {
    const auto& s = *entry.session;
    const auto status = info ? info->training.status : s.status();
    const auto epoch = info ? info->current_epoch : s.current_epoch();
    return Json{{"id", s.id()},
                {"dataset_id", entry.dataset_id},
                {"dataset", s.dataset().name},
                {"status", to_string(status)},
                {"current_epoch", epoch},
                {"config", config_json(s.config(), entry.spec)},
                {"event_delay_ms", entry.delay.count()}};
  }

  void list_datasets(Response& res) {
    std::lock_guard lock(mu_);
    Json list = Json::array();
    for (const auto& name : data::builtin_names()) {
      const auto& e = datasets_.at(name);
      list.push_back(dataset_json(name, e.dataset, true));
    }
    for (const auto& [id, e] : datasets_)
      if (!e.builtin) list.push_back(dataset_json(id, e.dataset, false));
    server_detail::write_json(res, 200, {{"datasets", list}});
  }

  void upload_dataset(const Request& req, Response& res) {
    std::string body = req.body;
    std::string name = req.has_param("name") ? req.get_param_value("name") : "";
    if (req.is_multipart_form_data()) {
      if (req.files.empty()) throw server_detail::HttpError(400, "BAD_REQUEST", "multipart upload carries no file");
      const auto it = req.files.find("file");
      const auto& file = it != req.files.end() ? it->second : req.files.begin()->second;
      body = file.content;
      if (name.empty()) name = file.filename;
    }
    if (name.empty()) name = "upload";
    std::optional<std::string> target;
    if (req.has_param("target")) target = req.get_param_value("target");
    data::Dataset ds = data::load_csv(body, name, target);

    std::lock_guard lock(mu_);
    const std::string id = "d" + std::to_string(++dataset_counter_);
    const auto& stored = datasets_.emplace(id, DatasetEntry{std::move(ds), false}).first->second;
    server_detail::write_json(res, 201, dataset_json(id, stored.dataset, false));
  }

  void create(const Request& req, Response& res) {
    using server_detail::HttpError;
    const Json body = server_detail::parse_body(req);
    if (!body.contains("dataset_id") || !body["dataset_id"].is_string())
      throw HttpError(400, "BAD_REQUEST", "body must contain a string 'dataset_id'");
    const std::string dataset_id = body["dataset_id"].get<std::string>();
    const auto spec = server_detail::parse_run_spec(body.value("config", Json()));
    auto delay = options_.event_delay;
    if (body.contains("event_delay_ms")) {
      const auto& d = body["event_delay_ms"];
      if (!d.is_number_integer() || d.get<std::int64_t>() < 0)
        throw HttpError(400, "BAD_REQUEST", "event_delay_ms must be a non-negative integer");
      delay = std::chrono::milliseconds(d.get<std::int64_t>());
    }

    data::Dataset source;
    {
      std::lock_guard lock(mu_);
      const auto it = datasets_.find(dataset_id);
      if (it == datasets_.end()) throw not_found("dataset", dataset_id);
      source = it->second.dataset;
    }
    const auto prepared = session::prepare_dataset(source, spec);
    const auto config = session::make_config(prepared, spec);
    session::SessionOptions session_options;
    session_options.max_events = options_.max_events;

    auto entry = std::make_shared<SessionEntry>();
    entry->dataset_id = dataset_id;
    entry->spec = spec;
    entry->delay = delay;
    {
      std::lock_guard lock(mu_);
      if (sessions_.size() >= options_.max_sessions)
        throw HttpError(429, "SESSION_LIMIT",
                        "session limit reached (" + std::to_string(options_.max_sessions) + ")");
      entry->session = session::create_session(prepared, config, session_options);
      sessions_.emplace(entry->session->id(), entry);
    }
    entry->worker = std::thread([this, entry] { drive(*entry); });
    server_detail::write_json(res, 201, descriptor(*entry));
  }

  /// The session's single driver: advances while Running, sleeps otherwise.
  void drive(SessionEntry& entry) {
    auto& s = *entry.session;
    while (!entry.halted && !stopping_) {
      const auto seen = s.version();
      const auto status = s.status();
      if (session::is_terminal(status)) return;
      if (status != session::SessionStatus::Running) {
        s.wait_changed(seen, std::chrono::milliseconds(100));
        continue;
      }
      try {
        s.advance();
      } catch (const StateError&) {
        continue;  // paused or stopped between the check and the call
      }
      if (entry.delay.count() > 0) s.wait_changed(s.version(), entry.delay);
    }
  }

  static void halt(SessionEntry& entry) {
    entry.halted = true;
    if (entry.worker.joinable()) entry.worker.join();
  }

  void equations(const Request& req, Response& res) {
    const auto entry = find_session(req.matches[1]);
    const auto& s = *entry->session;
    auto index_param = [&](const char* name) -> std::optional<std::size_t> {
      if (!req.has_param(name)) return std::nullopt;
      const auto v = req.get_param_value(name);
      std::size_t pos = 0;
      unsigned long long n = 0;
      try {
        n = std::stoull(v, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != v.size())
        throw server_detail::HttpError(400, "BAD_REQUEST", std::string("query parameter '") + name + "' must be an integer");
      return static_cast<std::size_t>(n);
    };
    const auto layer = index_param("layer");
    const auto index = index_param("index");
    if (layer && index) {
      server_detail::write_json(res, 200, equation_json(s.neuron_equation(*layer, *index)));
      return;
    }
    Json layers = Json::array();
    const auto& sizes = s.config().layer_sizes;
    for (std::size_t l = 1; l < sizes.size(); ++l) {
      if (layer && *layer != l) continue;
      Json neurons = Json::array();
      for (std::size_t i = 0; i < sizes[l]; ++i) neurons.push_back(equation_json(s.neuron_equation(l, i)));
      layers.push_back({{"layer", l}, {"equations", neurons}});
    }
    server_detail::write_json(res, 200, {{"layers", layers}});
  }

  void subscribe(const Request& req, Response& res) {
    using server_detail::HttpError;
    const auto entry = find_session(req.matches[1]);
    std::optional<std::uint64_t> last_seq;
    std::string raw;
    if (req.has_param("last_seq"))
      raw = req.get_param_value("last_seq");
    else if (req.has_header("Last-Event-ID"))
      raw = req.get_header_value("Last-Event-ID");
    if (!raw.empty()) {
      std::size_t pos = 0;
      try {
        last_seq = std::stoull(raw, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != raw.size() || raw.front() == '-')
        throw HttpError(400, "BAD_REQUEST", "last_seq must be a non-negative integer");
    }

    struct Cursor {
      bool snapshot_sent = false;
      std::uint64_t next = 0;
      std::chrono::steady_clock::time_point last_write = std::chrono::steady_clock::now();
    };
    auto cursor = std::make_shared<Cursor>();
    res.set_header("Cache-Control", "no-cache");
    res.set_header("X-Accel-Buffering", "no");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, entry, cursor, last_seq](std::size_t, httplib::DataSink& sink) {
          using server_detail::sse_frame;
          auto& s = *entry->session;
          auto write = [&](const std::string& frame) {
            cursor->last_write = std::chrono::steady_clock::now();
            return sink.write(frame.data(), frame.size());
          };
          if (!cursor->snapshot_sent) {
            const auto snap = s.snapshot();
            cursor->snapshot_sent = true;
            cursor->next = last_seq ? *last_seq + 1 : snap.next_seq;
            return write(sse_frame("snapshot", std::nullopt, snapshot_json(snap).dump()));
          }
          // version before status before events: anything after `seen`
          // wakes the wait below, and a terminal status read here means the
          // events fetched next are the last ones.
          const auto seen = s.version();
          const auto status = s.status();
          const auto events = s.events_from(cursor->next);
          for (const auto& e : events) {
            if (!write(sse_frame(std::nullopt, e.seq, trace::serialize_event(e)))) return false;
            cursor->next = e.seq + 1;
          }
          if (session::is_terminal(status) || entry->halted || stopping_) {
            sink.done();
            return true;
          }
          if (events.empty()) {
            s.wait_changed(seen, std::chrono::milliseconds(250));
            if (std::chrono::steady_clock::now() - cursor->last_write >= options_.heartbeat)
              return write(": keepalive\n\n");
          }
          return true;
        });
  }

  const ServerOptions options_;
  httplib::Server http_;
  std::thread listener_;
  std::atomic<bool> stopping_{false};
  int port_ = -1;

  mutable std::mutex mu_;
  std::map<std::string, DatasetEntry> datasets_;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions_;
  std::uint64_t dataset_counter_ = 0;
};

}  // namespace nntrace::server
