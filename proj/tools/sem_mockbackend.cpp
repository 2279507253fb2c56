// sem-mockbackend --listen <addr> --delay-ms D --rows R --row-cost-us C

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "sem/config.hpp"
#include "sem/harness.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic SOAP backend with a tunable cost model"};
  std::string listen = "127.0.0.1:8081";
  sem::MockBackendConfig cfg;
  app.add_option("--listen", listen, "host:port");
  app.add_option("--delay-ms", cfg.compute_delay_ms, "fixed compute delay per call")->check(CLI::NonNegativeNumber);
  app.add_option("--rows", cfg.rows_per_response, "rows per response");
  app.add_option("--row-cost-us", cfg.per_row_serialize_cost_us, "serialization cost per row")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--byte-cost-ns", cfg.per_byte_serialize_cost_ns, "serialization cost per response byte")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--threads", cfg.threads, "requests served concurrently")->check(CLI::PositiveNumber);
  app.add_option("--connections", cfg.connections, "connection-handling threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    auto [host, port] = sem::split_host_port(listen);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    sem::MockBackend backend(cfg);
    int bound = backend.start(host, port);
    std::cerr << "sem-mockbackend listening on " << host << ':' << bound << '\n';
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    backend.stop();
    std::cerr << "served " << backend.calls() << " calls\n";
  } catch (const std::exception& e) {
    std::cerr << "sem-mockbackend: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
