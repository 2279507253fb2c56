#pragma once

// Time-window batching of inbound requests ("current collections").
//
// Windower is the single-threaded core driven by explicit timestamps, so it
// can be exercised with a simulated clock. WindowStage wraps it with a lock,
// a timer thread and the bounded hand-off queue used by the proxy.

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <stop_token>
#include <thread>
#include <utility>
#include <vector>

#include "sem/bounded_queue.hpp"
#include "sem/types.hpp"

namespace sem {

struct WindowConfig {
  Nanos window{std::chrono::milliseconds(2)};
  std::size_t max_batch_size = 4096;
  std::size_t queue_depth = 64;
};

template <typename T>
struct WindowBatch {
  std::uint64_t batch_id = 0;
  TimePoint window_start{};
  TimePoint window_end{};
  TimePoint flushed_at{};
  std::vector<T> requests;  // arrival order
};

struct ArrivalMember {
  template <typename T>
  TimePoint& operator()(T& item) const noexcept {
    return item.arrival_time;
  }
};

template <typename T, typename ArrivalOf = ArrivalMember>
class Windower {
 public:
  Windower(TimePoint origin, const WindowConfig& cfg) : origin_(origin), cfg_(cfg) {
    if (cfg_.window <= Nanos::zero()) throw std::invalid_argument("window length must be positive");
    if (cfg_.max_batch_size == 0) throw std::invalid_argument("max_batch_size must be positive");
    open_.window_start = origin_;
    open_.window_end = origin_ + cfg_.window;
  }

  // Number of batches admit(_, now) would close, for overflow checks.
  std::size_t closes_on_admit(TimePoint now) const noexcept {
    std::size_t n = 0;
    bool rolled = now >= open_.window_end;
    if (rolled && !open_.requests.empty()) ++n;
    std::size_t pending = rolled ? 0 : open_.requests.size();
    if (pending + 1 >= cfg_.max_batch_size) ++n;
    return n;
  }

  // Stamps the item's arrival time (clamped so it never precedes the open
  // window) and appends it. Any batches closed as a consequence are appended
  // to `closed`.
  void admit(T item, TimePoint now, std::vector<WindowBatch<T>>& closed) {
    roll_to(now, closed);
    TimePoint arrival = std::max(now, open_.window_start);
    ArrivalOf{}(item) = arrival;
    open_.requests.push_back(std::move(item));
    last_arrival_ = arrival;
    if (open_.requests.size() >= cfg_.max_batch_size) {
      // Forced flush: cut the window right after the last arrival; the
      // remainder of the aligned window becomes the next batch's interval.
      TimePoint cut = arrival + Nanos(1);
      if (cut >= open_.window_end) {
        close_and_advance(now, closed, now);
      } else {
        TimePoint aligned_end = open_.window_end;
        open_.window_end = cut;
        emit(closed, now);
        open_.window_start = cut;
        open_.window_end = aligned_end;
      }
    }
  }

  // Timer entry point: closes every window that ended at or before `now`.
  // Returns the closed batch, if it held anything.
  std::optional<WindowBatch<T>> flush(TimePoint now) {
    std::vector<WindowBatch<T>> closed;
    roll_to(now, closed);
    if (closed.empty()) return std::nullopt;
    return std::move(closed.front());
  }

  // Closes the open window immediately (shutdown drain).
  std::optional<WindowBatch<T>> force_flush(TimePoint now) {
    std::vector<WindowBatch<T>> closed;
    roll_to(now, closed);
    if (!open_.requests.empty()) {
      TimePoint cut = std::max(now, last_arrival_ + Nanos(1));
      cut = std::min(cut, open_.window_end);
      TimePoint aligned_end = open_.window_end;
      open_.window_end = cut;
      emit(closed, now);
      open_.window_start = cut;
      open_.window_end = aligned_end;
    }
    if (closed.empty()) return std::nullopt;
    return std::move(closed.back());
  }

  TimePoint open_window_end() const noexcept { return open_.window_end; }
  std::size_t open_size() const noexcept { return open_.requests.size(); }
  std::uint64_t batches_emitted() const noexcept { return next_batch_id_; }

 private:
  void roll_to(TimePoint now, std::vector<WindowBatch<T>>& closed) {
    if (now < open_.window_end) return;
    close_and_advance(now, closed, now);
  }

  void close_and_advance(TimePoint now, std::vector<WindowBatch<T>>& closed, TimePoint flushed_at) {
    bool had_requests = !open_.requests.empty();
    if (had_requests) emit(closed, flushed_at);
    TimePoint floor = had_requests ? last_arrival_ + Nanos(1) : origin_;
    TimePoint t = std::max(now, floor);
    auto k = (t - origin_) / cfg_.window;
    open_.window_start = std::max(origin_ + k * cfg_.window, floor);
    open_.window_end = origin_ + (k + 1) * cfg_.window;
  }

  void emit(std::vector<WindowBatch<T>>& closed, TimePoint flushed_at) {
    WindowBatch<T> out;
    out.batch_id = next_batch_id_++;
    out.window_start = open_.window_start;
    out.window_end = open_.window_end;
    out.flushed_at = flushed_at;
    out.requests = std::move(open_.requests);
    open_.requests.clear();
    closed.push_back(std::move(out));
  }

  TimePoint origin_;
  WindowConfig cfg_;
  WindowBatch<T> open_;
  TimePoint last_arrival_{};
  std::uint64_t next_batch_id_ = 0;
};

enum class AdmitResult { Accepted, Overflowed };

// Thread-safe windowing stage. admit() may be called from any number of
// connection handlers; a timer thread closes windows on their aligned
// boundaries and hands batches to `downstream`.
template <typename T, typename ArrivalOf = ArrivalMember>
class WindowStage {
 public:
  WindowStage(const WindowConfig& cfg, BoundedQueue<WindowBatch<T>>& downstream)
      : cfg_(cfg), downstream_(downstream), windower_(Clock::now(), cfg) {}

  ~WindowStage() { stop(); }

  WindowStage(const WindowStage&) = delete;
  WindowStage& operator=(const WindowStage&) = delete;

  void start() {
    timer_ = std::jthread([this](std::stop_token st) { run_timer(st); });
  }

  // Overflowed means the item was not admitted (the queue cannot take the
  // batch it would close) and must be handled by the caller directly.
  AdmitResult admit(T item) {
    std::vector<WindowBatch<T>> closed;
    {
      std::lock_guard lock(mu_);
      if (stopped_) {
        overflowed_.fetch_add(1, std::memory_order_relaxed);
        return AdmitResult::Overflowed;
      }
      TimePoint now = Clock::now();
      std::size_t needed = windower_.closes_on_admit(now);
      if (needed > 0 && downstream_.free_slots() < needed) {
        overflowed_.fetch_add(1, std::memory_order_relaxed);
        return AdmitResult::Overflowed;
      }
      windower_.admit(std::move(item), now, closed);
      for (auto& b : closed) {
        // Capacity was checked under the lock and only this stage pushes.
        downstream_.try_push(b);
      }
    }
    admitted_.fetch_add(1, std::memory_order_relaxed);
    return AdmitResult::Accepted;
  }

  // Stops the timer and hands the open batch downstream.
  void stop() {
    {
      std::lock_guard lock(mu_);
      if (stopped_) return;
      stopped_ = true;
    }
    if (timer_.joinable()) {
      timer_.request_stop();
      timer_.join();
    }
    std::optional<WindowBatch<T>> last;
    {
      std::lock_guard lock(mu_);
      last = windower_.force_flush(Clock::now());
    }
    if (last) downstream_.push(std::move(*last));
  }

  std::uint64_t admitted() const noexcept { return admitted_.load(); }
  std::uint64_t overflowed() const noexcept { return overflowed_.load(); }

 private:
  // Batches are pushed under the lock so the queue sees them in batch_id
  // order. While the queue is full the open window keeps collecting and the
  // timer retries shortly.
  void run_timer(std::stop_token st) {
    std::unique_lock lock(mu_);
    while (!st.stop_requested()) {
      TimePoint boundary = windower_.open_window_end();
      wake_.wait_until(lock, st, boundary, [] { return false; });
      if (st.stop_requested()) return;
      while (downstream_.free_slots() == 0 && !st.stop_requested()) {
        wake_.wait_for(lock, st, std::chrono::microseconds(200), [] { return false; });
      }
      if (auto batch = windower_.flush(Clock::now())) downstream_.try_push(*batch);
    }
  }

  WindowConfig cfg_;
  BoundedQueue<WindowBatch<T>>& downstream_;
  std::mutex mu_;
  std::condition_variable_any wake_;
  Windower<T, ArrivalOf> windower_;
  bool stopped_ = false;
  std::atomic<std::uint64_t> admitted_{0};
  std::atomic<std::uint64_t> overflowed_{0};
  std::jthread timer_;
};

}  // namespace sem
