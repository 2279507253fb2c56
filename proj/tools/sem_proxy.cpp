// sem-proxy --listen <addr:port> --backend <url> [--config <file>]

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "sem/config.hpp"
#include "sem/proxy_core.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coalescing SOAP reverse proxy"};
  std::string listen;
  std::string backend;
  std::string config_path;
  app.add_option("--listen", listen, "address to listen on, host:port");
  app.add_option("--backend", backend, "backend base URL");
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  try {
    sem::ProxySettings settings;
    if (!config_path.empty()) settings = sem::load_proxy_settings(config_path);
    auto& cfg = settings.proxy;
    if (!listen.empty()) std::tie(cfg.listen_host, cfg.listen_port) = sem::split_host_port(listen);
    if (!backend.empty()) cfg.backend.base_url = backend;

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    sem::Proxy proxy(cfg);
    int port = proxy.start();
    std::cerr << "sem-proxy listening on " << cfg.listen_host << ':' << port << " -> " << cfg.backend.base_url
              << '\n';
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    std::cerr << "sem-proxy draining\n";
    proxy.stop();
    if (settings.metrics_csv) sem::export_csv(proxy.history(), *settings.metrics_csv);
    auto ledger = proxy.ledger();
    std::cerr << "delivered " << ledger.delivered << " of " << ledger.registered << '\n';
  } catch (const std::exception& e) {
    std::cerr << "sem-proxy: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
