// nntrace-server: HTTP + event-stream front end for live training sessions.

#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nntrace/server/server.hpp"

namespace {

nntrace::server::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->http().stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nntrace-server: serve live, traced training sessions over HTTP"};
  nntrace::server::ServerOptions options;
  std::string listen = "127.0.0.1:8080";
  std::size_t max_upload_mb = 5;
  long delay_ms = 0;
  app.add_option("--listen", listen, "host:port to listen on")->envname("NNTRACE_LISTEN");
  app.add_option("--static-dir", options.static_dir, "directory served at / (UI bundle)")
      ->envname("NNTRACE_STATIC_DIR");
  app.add_option("--max-upload-mb", max_upload_mb, "largest accepted request body, in MB")
      ->envname("NNTRACE_MAX_UPLOAD_MB");
  app.add_option("--max-sessions", options.max_sessions, "concurrent session cap")
      ->envname("NNTRACE_MAX_SESSIONS");
  app.add_option("--event-delay-ms", delay_ms, "default pause between emitted events")
      ->envname("NNTRACE_EVENT_DELAY_MS")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--max-events", options.max_events, "retained events per session")
      ->envname("NNTRACE_MAX_EVENTS");
  CLI11_PARSE(app, argc, argv);

  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << "error: --listen expects host:port\n";
    return 2;
  }
  options.host = listen.substr(0, colon);
  try {
    options.port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    std::cerr << "error: bad port in --listen '" << listen << "'\n";
    return 2;
  }
  options.max_upload_bytes = max_upload_mb * 1024 * 1024;
  options.event_delay = std::chrono::milliseconds(delay_ms);

  try {
    nntrace::server::Server server(options);
    const int port = server.bind();
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on http://" << options.host << ":" << port << "\n";
    server.listen();
    g_server = nullptr;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
