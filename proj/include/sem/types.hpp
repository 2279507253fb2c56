#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>

namespace sem {

using Clock = std::chrono::steady_clock;
using TimePoint = Clock::time_point;
using Nanos = std::chrono::nanoseconds;

// Opaque per-request token. Assigned by the proxy on arrival, never reused
// within a process.
enum class RequestId : std::uint64_t {};

inline std::uint64_t to_underlying(RequestId id) noexcept {
  return static_cast<std::uint64_t>(id);
}

inline std::string to_string(RequestId id) { return std::to_string(to_underlying(id)); }

// A complete HTTP response as relayed to clients: status code, content type
// and the serialized body bytes.
struct HttpReply {
  int status = 200;
  std::string content_type = "text/xml; charset=utf-8";
  std::string body;

  friend bool operator==(const HttpReply&, const HttpReply&) = default;
};

inline double to_ms(Nanos d) noexcept {
  return std::chrono::duration<double, std::milli>(d).count();
}

inline Nanos from_ms(double ms) noexcept {
  return std::chrono::duration_cast<Nanos>(std::chrono::duration<double, std::milli>(ms));
}

}  // namespace sem

template <>
struct std::hash<sem::RequestId> {
  std::size_t operator()(sem::RequestId id) const noexcept {
    return std::hash<std::uint64_t>{}(sem::to_underlying(id));
  }
};
