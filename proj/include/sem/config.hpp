#pragma once

// JSON configuration for sem-proxy. All keys are optional; unknown keys are
// rejected so typos do not silently fall back to defaults.
//
//   window_ms, max_batch_size, queue_depth                  windowing
//   cache_enabled, cache_ttl_ms, cache_capacity,
//   min_group_size, compress_threshold_nodes,
//   operation_denylist                                      dedup / cache
//   gate_enter, gate_exit, gate_alpha, gate_window,
//   overhead_budget_pct, gate_probe_interval,
//   mode ("adaptive" | "sem" | "passthrough")               gate
//   listen ("host:port"), backend (URL), connect_timeout_ms,
//   request_timeout_ms, max_connections, handler_threads,
//   forward_queue_depth, keep_alive_timeout_sec,
//   health_path                                             proxy
//   metrics_interval_ms, metrics_history, metrics_csv       metrics

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sem/proxy_core.hpp"

namespace sem {

struct ProxySettings {
  ProxyConfig proxy;
  std::optional<std::string> metrics_csv;
};

inline std::pair<std::string, int> split_host_port(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("expected host:port, got '" + addr + "'");
  std::string host = addr.substr(0, colon);
  if (host.empty()) host = "0.0.0.0";
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in '" + addr + "'");
  }
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range in '" + addr + "'");
  return {host, port};
}

inline ModePolicy parse_mode_policy(const std::string& s) {
  if (s == "adaptive") return ModePolicy::Adaptive;
  if (s == "sem") return ModePolicy::Sem;
  if (s == "passthrough") return ModePolicy::Passthrough;
  throw std::invalid_argument("mode must be adaptive, sem or passthrough, got '" + s + "'");
}

inline ProxySettings parse_proxy_settings(const nlohmann::json& j, ProxySettings base = {}) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  ProxySettings out = std::move(base);
  ProxyConfig& c = out.proxy;
  auto ms = [](const nlohmann::json& v) { return from_ms(v.get<double>()); };
  for (const auto& [key, v] : j.items()) {
    if (key == "window_ms") {
      c.window.window = ms(v);
    } else if (key == "max_batch_size") {
      c.window.max_batch_size = v.get<std::size_t>();
    } else if (key == "queue_depth") {
      c.window.queue_depth = v.get<std::size_t>();
    } else if (key == "cache_enabled") {
      c.dedup.cache_enabled = v.get<bool>();
    } else if (key == "cache_ttl_ms") {
      c.dedup.cache.ttl = ms(v);
    } else if (key == "cache_capacity") {
      c.dedup.cache.capacity = v.get<std::size_t>();
    } else if (key == "min_group_size") {
      c.dedup.min_group_size = v.get<std::size_t>();
    } else if (key == "compress_threshold_nodes") {
      c.dedup.cache.compress_threshold_nodes = v.get<std::size_t>();
    } else if (key == "operation_denylist") {
      c.dedup.operation_denylist.clear();
      for (const auto& op : v) c.dedup.operation_denylist.insert(op.get<std::string>());
    } else if (key == "gate_enter") {
      c.gate.enter = v.get<double>();
    } else if (key == "gate_exit") {
      c.gate.exit = v.get<double>();
    } else if (key == "gate_alpha") {
      c.gate.alpha = v.get<double>();
    } else if (key == "gate_window") {
      c.gate.window = v.get<std::size_t>();
    } else if (key == "overhead_budget_pct") {
      c.gate.overhead_budget_pct = v.get<double>();
    } else if (key == "gate_probe_interval") {
      c.gate_probe_interval = v.get<std::size_t>();
    } else if (key == "mode") {
      c.mode = parse_mode_policy(v.get<std::string>());
    } else if (key == "listen") {
      std::tie(c.listen_host, c.listen_port) = split_host_port(v.get<std::string>());
    } else if (key == "backend") {
      c.backend.base_url = v.get<std::string>();
    } else if (key == "connect_timeout_ms") {
      c.backend.connect_timeout = ms(v);
    } else if (key == "request_timeout_ms") {
      c.backend.request_timeout = ms(v);
    } else if (key == "max_connections") {
      c.backend.max_connections = v.get<std::size_t>();
    } else if (key == "handler_threads") {
      c.handler_threads = v.get<std::size_t>();
    } else if (key == "forward_queue_depth") {
      c.forward_queue_depth = v.get<std::size_t>();
    } else if (key == "keep_alive_timeout_sec") {
      c.keep_alive_timeout_sec = v.get<int>();
    } else if (key == "health_path") {
      c.health_path = v.get<std::string>();
    } else if (key == "metrics_interval_ms") {
      c.metrics_interval = ms(v);
    } else if (key == "metrics_history") {
      c.metrics_history = v.get<std::size_t>();
    } else if (key == "metrics_csv") {
      out.metrics_csv = v.get<std::string>();
    } else {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  return out;
}

inline ProxySettings load_proxy_settings(const std::filesystem::path& path, ProxySettings base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config " + path.string() + ": " + e.what());
  }
  return parse_proxy_settings(j, std::move(base));
}

}  // namespace sem
