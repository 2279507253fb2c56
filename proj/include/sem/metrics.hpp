#pragma once

// Performance counters and response-time statistics, aggregated per
// reporting interval.
//
// record*() may be called from any thread; events go to one of a fixed set of
// shards chosen by thread id, and snapshot() merges and resets the shards.

#include <algorithm>
#include <array>
#include <cerrno>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include "sem/csv.hpp"
#include "sem/gate.hpp"
#include "sem/types.hpp"

namespace sem {

// Fixed-bucket latency histogram: 0.05 ms wide buckets below 10 ms, then
// buckets growing by 5% up to ~10 minutes.
class LatencyHistogram {
 public:
  static constexpr double kLinearWidthMs = 0.05;
  static constexpr double kLinearLimitMs = 10.0;
  static constexpr double kGrowth = 1.05;
  static constexpr double kMaxMs = 600000.0;

  LatencyHistogram() : counts_(bucket_bounds().size() + 1, 0) {}

  void add(Nanos d) {
    double ms = std::max(0.0, to_ms(d));
    ++counts_[bucket_of(ms)];
    ++count_;
    sum_ms_ += ms;
    max_ms_ = std::max(max_ms_, ms);
  }

  void merge(const LatencyHistogram& o) {
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    count_ += o.count_;
    sum_ms_ += o.sum_ms_;
    max_ms_ = std::max(max_ms_, o.max_ms_);
  }

  void clear() {
    std::fill(counts_.begin(), counts_.end(), 0);
    count_ = 0;
    sum_ms_ = 0.0;
    max_ms_ = 0.0;
  }

  std::uint64_t count() const noexcept { return count_; }
  double mean_ms() const noexcept { return count_ == 0 ? 0.0 : sum_ms_ / static_cast<double>(count_); }
  double max_ms() const noexcept { return max_ms_; }

  // Upper bound of the bucket holding the q-quantile, capped at the observed
  // maximum.
  double quantile_ms(double q) const noexcept {
    if (count_ == 0) return 0.0;
    auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(count_)));
    rank = std::clamp<std::uint64_t>(rank, 1, count_);
    std::uint64_t seen = 0;
    const auto& bounds = bucket_bounds();
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      seen += counts_[i];
      if (seen >= rank) return i < bounds.size() ? std::min(bounds[i], max_ms_) : max_ms_;
    }
    return max_ms_;
  }

  // Upper bounds (exclusive) of every finite bucket, ascending.
  static const std::vector<double>& bucket_bounds() {
    static const std::vector<double> bounds = [] {
      std::vector<double> b;
      for (int i = 1; i * kLinearWidthMs <= kLinearLimitMs + 1e-9; ++i) b.push_back(i * kLinearWidthMs);
      double edge = kLinearLimitMs;
      while (edge < kMaxMs) {
        edge *= kGrowth;
        b.push_back(edge);
      }
      return b;
    }();
    return bounds;
  }

 private:
  static std::size_t bucket_of(double ms) {
    const auto& bounds = bucket_bounds();
    if (ms < kLinearLimitMs) {
      return std::min(static_cast<std::size_t>(ms / kLinearWidthMs), bounds.size());
    }
    return static_cast<std::size_t>(std::upper_bound(bounds.begin(), bounds.end(), ms) - bounds.begin());
  }

  std::vector<std::uint64_t> counts_;
  std::uint64_t count_ = 0;
  double sum_ms_ = 0.0;
  double max_ms_ = 0.0;
};

enum class Counter : std::size_t {
  BytesReceived,
  BytesSent,
  ConnectionAttempts,
  Requests,
  Responses,
  BackendCalls,
  CacheHits,
  Faults,
  ClientDisconnects,
  Overflows,
  Batches,
  kCount
};

enum class Timing : std::size_t { ResponseTime, WindowWait, BackendService, kCount };

struct LatencySummary {
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double max = 0.0;
  std::uint64_t count = 0;

  static LatencySummary of(const LatencyHistogram& h) {
    return {h.mean_ms(), h.quantile_ms(0.50), h.quantile_ms(0.95), h.max_ms(), h.count()};
  }
};

using CounterArray = std::array<std::uint64_t, static_cast<std::size_t>(Counter::kCount)>;

struct MetricsSnapshot {
  TimePoint interval_start{};
  TimePoint interval_end{};
  double start_s = 0.0;  // relative to the Metrics origin
  double end_s = 0.0;
  double bytes_received_per_sec = 0.0;
  double bytes_sent_per_sec = 0.0;
  double total_bytes_per_sec = 0.0;
  double connection_attempts_per_sec = 0.0;
  double requests_per_sec = 0.0;
  double backend_calls_per_sec = 0.0;
  double duplicate_ratio_mean = 0.0;
  LatencySummary response_time_ms;
  LatencySummary window_wait_ms;
  GateMode gate_mode = GateMode::Sem;
  double cache_hit_rate = 0.0;
  CounterArray counts{};  // raw per-interval counts

  std::uint64_t count(Counter c) const noexcept { return counts[static_cast<std::size_t>(c)]; }
};

class Metrics {
 public:
  static constexpr std::size_t kShards = 8;

  explicit Metrics(TimePoint origin = Clock::now()) : origin_(origin), interval_start_(origin) {}

  void record(Counter c, std::uint64_t n = 1) {
    auto& s = shard();
    std::lock_guard lock(s.mu);
    s.counters[static_cast<std::size_t>(c)] += n;
  }

  void record(Timing t, Nanos d) {
    auto& s = shard();
    std::lock_guard lock(s.mu);
    s.timings[static_cast<std::size_t>(t)].add(d);
  }

  // One value per processed batch.
  void record_duplicate_ratio(double ratio) {
    auto& s = shard();
    std::lock_guard lock(s.mu);
    s.ratio_sum += ratio;
    ++s.ratio_count;
  }

  void set_gate_mode(GateMode m) noexcept { gate_mode_.store(m, std::memory_order_relaxed); }
  GateMode gate_mode() const noexcept { return gate_mode_.load(std::memory_order_relaxed); }

  // Closes the current interval at `now` and opens the next one.
  MetricsSnapshot snapshot(TimePoint now = Clock::now()) {
    std::lock_guard reporter(snapshot_mu_);
    CounterArray counts{};
    std::array<LatencyHistogram, static_cast<std::size_t>(Timing::kCount)> timings;
    double ratio_sum = 0.0;
    std::uint64_t ratio_count = 0;
    for (auto& s : shards_) {
      std::lock_guard lock(s.mu);
      for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += s.counters[i];
      for (std::size_t i = 0; i < timings.size(); ++i) timings[i].merge(s.timings[i]);
      ratio_sum += s.ratio_sum;
      ratio_count += s.ratio_count;
      s.reset();
    }
    for (std::size_t i = 0; i < counts.size(); ++i) totals_[i] += counts[i];
    for (std::size_t i = 0; i < timings.size(); ++i) total_timings_[i].merge(timings[i]);

    MetricsSnapshot snap;
    snap.interval_start = interval_start_;
    snap.interval_end = std::max(now, interval_start_);
    snap.start_s = std::chrono::duration<double>(snap.interval_start - origin_).count();
    snap.end_s = std::chrono::duration<double>(snap.interval_end - origin_).count();
    snap.counts = counts;
    double secs = std::chrono::duration<double>(snap.interval_end - snap.interval_start).count();
    auto rate = [&](Counter c) { return secs > 0.0 ? static_cast<double>(snap.count(c)) / secs : 0.0; };
    snap.bytes_received_per_sec = rate(Counter::BytesReceived);
    snap.bytes_sent_per_sec = rate(Counter::BytesSent);
    snap.total_bytes_per_sec = snap.bytes_received_per_sec + snap.bytes_sent_per_sec;
    snap.connection_attempts_per_sec = rate(Counter::ConnectionAttempts);
    snap.requests_per_sec = rate(Counter::Requests);
    snap.backend_calls_per_sec = rate(Counter::BackendCalls);
    snap.duplicate_ratio_mean = ratio_count == 0 ? 0.0 : ratio_sum / static_cast<double>(ratio_count);
    snap.response_time_ms = LatencySummary::of(timings[static_cast<std::size_t>(Timing::ResponseTime)]);
    snap.window_wait_ms = LatencySummary::of(timings[static_cast<std::size_t>(Timing::WindowWait)]);
    snap.gate_mode = gate_mode();
    auto requests = snap.count(Counter::Requests);
    snap.cache_hit_rate =
        requests == 0 ? 0.0 : static_cast<double>(snap.count(Counter::CacheHits)) / static_cast<double>(requests);
    interval_start_ = snap.interval_end;
    return snap;
  }

  // Sums over every closed interval.
  std::uint64_t total(Counter c) const {
    std::lock_guard reporter(snapshot_mu_);
    return totals_[static_cast<std::size_t>(c)];
  }

  LatencySummary total_latency(Timing t) const {
    std::lock_guard reporter(snapshot_mu_);
    return LatencySummary::of(total_timings_[static_cast<std::size_t>(t)]);
  }

  TimePoint origin() const noexcept { return origin_; }

 private:
  struct alignas(64) Shard {
    std::mutex mu;
    CounterArray counters{};
    std::array<LatencyHistogram, static_cast<std::size_t>(Timing::kCount)> timings;
    double ratio_sum = 0.0;
    std::uint64_t ratio_count = 0;

    void reset() {
      counters.fill(0);
      for (auto& t : timings) t.clear();
      ratio_sum = 0.0;
      ratio_count = 0;
    }
  };

  Shard& shard() {
    return shards_[std::hash<std::thread::id>{}(std::this_thread::get_id()) % kShards];
  }

  TimePoint origin_;
  TimePoint interval_start_;
  std::array<Shard, kShards> shards_;
  std::atomic<GateMode> gate_mode_{GateMode::Sem};
  mutable std::mutex snapshot_mu_;
  CounterArray totals_{};
  std::array<LatencyHistogram, static_cast<std::size_t>(Timing::kCount)> total_timings_;
};

inline const std::vector<std::string>& metrics_csv_columns() {
  static const std::vector<std::string> cols = {
      "interval_start_s",      "interval_end_s",       "bytes_received_per_sec",
      "bytes_sent_per_sec",    "total_bytes_per_sec",  "connection_attempts_per_sec",
      "requests_per_sec",      "backend_calls_per_sec", "duplicate_ratio_mean",
      "response_time_mean_ms", "response_time_p50_ms", "response_time_p95_ms",
      "response_time_max_ms",  "gate_mode",            "cache_hit_rate"};
  return cols;
}

inline std::vector<std::string> to_csv_row(const MetricsSnapshot& s) {
  using csv::fixed;
  return {fixed(s.start_s),
          fixed(s.end_s),
          fixed(s.bytes_received_per_sec),
          fixed(s.bytes_sent_per_sec),
          fixed(s.total_bytes_per_sec),
          fixed(s.connection_attempts_per_sec),
          fixed(s.requests_per_sec),
          fixed(s.backend_calls_per_sec),
          fixed(s.duplicate_ratio_mean),
          fixed(s.response_time_ms.mean),
          fixed(s.response_time_ms.p50),
          fixed(s.response_time_ms.p95),
          fixed(s.response_time_ms.max),
          to_string(s.gate_mode),
          fixed(s.cache_hit_rate)};
}

inline void write_csv(std::ostream& os, const std::vector<MetricsSnapshot>& snapshots) {
  csv::write_row(os, metrics_csv_columns());
  for (const auto& s : snapshots) csv::write_row(os, to_csv_row(s));
}

// Throws std::system_error when the file cannot be written.
inline void export_csv(const std::vector<MetricsSnapshot>& snapshots, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::system_error(errno, std::generic_category(), "cannot open " + path.string());
  }
  write_csv(out, snapshots);
  out.flush();
  if (!out) throw std::system_error(errno, std::generic_category(), "write failed: " + path.string());
}

}  // namespace sem
