#pragma once

// cpp-httplib with a listen backlog large enough for bursts of a thousand
// simultaneous connects, poll() instead of select() so descriptors above
// FD_SETSIZE work, and Nagle off so small keep-alive requests are not held
// back by delayed ACKs.

#ifndef CPPHTTPLIB_USE_POLL
#define CPPHTTPLIB_USE_POLL
#endif
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 1024
#endif
#ifndef CPPHTTPLIB_TCP_NODELAY
#define CPPHTTPLIB_TCP_NODELAY true
#endif

#include <httplib.h>

#include <memory>
#include <stdexcept>
#include <string>

#include "sem/soap_codec.hpp"

namespace sem {

struct Endpoint {
  std::string scheme_host_port;  // e.g. "http://127.0.0.1:8081"
  std::string path = "/";

  // Accepts "http://host[:port][/path]" or "host:port".
  static Endpoint parse(const std::string& url) {
    std::string rest = url;
    std::string scheme = "http://";
    if (auto p = rest.find("://"); p != std::string::npos) {
      scheme = rest.substr(0, p + 3);
      rest = rest.substr(p + 3);
    }
    if (scheme != "http://") throw std::invalid_argument("only http:// URLs are supported: " + url);
    Endpoint e;
    auto slash = rest.find('/');
    std::string authority = rest.substr(0, slash);
    if (authority.empty()) throw std::invalid_argument("URL has no host: " + url);
    e.scheme_host_port = scheme + authority;
    if (slash != std::string::npos) e.path = rest.substr(slash);
    return e;
  }
};

inline HeaderMap to_header_map(const httplib::Headers& headers) {
  HeaderMap out;
  for (const auto& [k, v] : headers) out.emplace(k, v);
  return out;
}

// Wraps httplib's thread pool to observe every accepted connection.
class CountingTaskQueue final : public httplib::TaskQueue {
 public:
  CountingTaskQueue(std::size_t threads, std::function<void()> on_connection)
      : pool_(std::make_unique<httplib::ThreadPool>(threads)), on_connection_(std::move(on_connection)) {}

  bool enqueue(std::function<void()> fn) override {
    if (on_connection_) on_connection_();
    return pool_->enqueue(std::move(fn));
  }

  void shutdown() override { pool_->shutdown(); }

 private:
  std::unique_ptr<httplib::ThreadPool> pool_;
  std::function<void()> on_connection_;
};

}  // namespace sem
