#pragma once

// The coalescing reverse proxy. Requests flow through five stages:
//
//   connection handlers -> windowing -> dedup + gate -> backend forwarding
//   -> fan-out
//
// joined by bounded queues. Every admitted request receives exactly one reply
// (the backend's bytes, a copy of its representative's bytes, cached bytes,
// or a SOAP fault). Delivery order across requests is not preserved.

#include <time.h>

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sem/bounded_queue.hpp"
#include "sem/dedup_engine.hpp"
#include "sem/gate.hpp"
#include "sem/http.hpp"
#include "sem/metrics.hpp"
#include "sem/soap_codec.hpp"
#include "sem/types.hpp"
#include "sem/windowing.hpp"

namespace sem {

struct BackendTarget {
  std::string base_url = "http://127.0.0.1:8081";
  Nanos connect_timeout{std::chrono::seconds(2)};
  Nanos request_timeout{std::chrono::seconds(10)};
  std::size_t max_connections = 64;
};

// Adaptive follows the gate; the other two pin the mode for every batch.
enum class ModePolicy { Adaptive, Sem, Passthrough };

struct ProxyConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;  // 0 picks a free port
  BackendTarget backend;
  WindowConfig window;
  DedupConfig dedup;
  GateConfig gate;
  ModePolicy mode = ModePolicy::Adaptive;
  std::size_t gate_probe_interval = 8;  // analyze every Nth passthrough batch
  std::size_t handler_threads = 256;
  std::size_t forward_queue_depth = 16384;
  Nanos metrics_interval{std::chrono::seconds(1)};
  std::size_t metrics_history = 3600;
  std::string health_path = "/_sem/health";
  int keep_alive_timeout_sec = 5;
};

// Audit counters for the exactly-once delivery contract.
struct DeliveryLedger {
  std::uint64_t registered = 0;
  std::uint64_t delivered = 0;
  std::uint64_t duplicate_deliveries = 0;  // must stay 0
  std::uint64_t abandoned = 0;             // handler gave up waiting
  std::uint64_t late_deliveries = 0;       // reply arrived after abandonment
  std::uint64_t outstanding = 0;
};

struct BatchRecord {
  std::uint64_t batch_id = 0;
  std::size_t size = 0;
  std::size_t representatives = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
  GateMode mode = GateMode::Sem;
  double duplicate_ratio = 0.0;
  bool bypass = false;
};

struct ProxyCounters {
  std::uint64_t received = 0;
  std::uint64_t parse_faults = 0;
  std::uint64_t admitted = 0;
  std::uint64_t bypassed = 0;
  std::uint64_t batches = 0;
  std::uint64_t backend_calls = 0;
  std::uint64_t backend_failures = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t duplicates_served = 0;
};

class PendingRegistry {
 public:
  std::future<HttpReply> enroll(RequestId id) {
    std::promise<HttpReply> p;
    auto f = p.get_future();
    std::lock_guard lock(mu_);
    pending_.emplace(id, std::move(p));
    ++ledger_.registered;
    return f;
  }

  void deliver(RequestId id, HttpReply reply) {
    std::promise<HttpReply> p;
    {
      std::lock_guard lock(mu_);
      auto it = pending_.find(id);
      if (it == pending_.end()) {
        if (abandoned_.erase(id) > 0) {
          ++ledger_.late_deliveries;
        } else {
          ++ledger_.duplicate_deliveries;
        }
        return;
      }
      p = std::move(it->second);
      pending_.erase(it);
      ++ledger_.delivered;
    }
    p.set_value(std::move(reply));
  }

  // False when the reply was already delivered (the future is ready).
  bool abandon(RequestId id) {
    std::lock_guard lock(mu_);
    if (pending_.erase(id) == 0) return false;
    abandoned_.insert(id);
    ++ledger_.abandoned;
    return true;
  }

  DeliveryLedger ledger() const {
    std::lock_guard lock(mu_);
    DeliveryLedger l = ledger_;
    l.outstanding = pending_.size();
    return l;
  }

 private:
  mutable std::mutex mu_;
  std::unordered_map<RequestId, std::promise<HttpReply>> pending_;
  std::unordered_set<RequestId> abandoned_;
  DeliveryLedger ledger_;
};

// CPU time of the calling thread; analysis cost is charged in CPU time so
// preemption on a busy host does not count against the overhead budget.
inline Nanos thread_cpu_now() noexcept {
  timespec ts{};
  ::clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return std::chrono::seconds(ts.tv_sec) + Nanos(ts.tv_nsec);
}

inline HttpReply fault_reply(int status, std::string_view code, std::string_view message) {
  return HttpReply{status, "text/xml; charset=utf-8", build_fault(code, message)};
}

class Proxy {
 public:
  explicit Proxy(ProxyConfig cfg)
      : cfg_(std::move(cfg)),
        backend_(Endpoint::parse(cfg_.backend.base_url)),
        dedup_(cfg_.dedup),
        gate_(cfg_.gate),
        batches_(cfg_.window.queue_depth),
        forward_q_(cfg_.forward_queue_depth),
        fanout_q_(cfg_.forward_queue_depth),
        window_(cfg_.window, batches_) {
    if (cfg_.backend.max_connections == 0) throw std::invalid_argument("backend.max_connections must be positive");
    if (cfg_.backend.connect_timeout <= Nanos::zero() || cfg_.backend.request_timeout <= Nanos::zero()) {
      throw std::invalid_argument("backend timeouts must be positive");
    }
    if (cfg_.mode == ModePolicy::Passthrough) metrics_.set_gate_mode(GateMode::Passthrough);
  }

  ~Proxy() { stop(); }

  Proxy(const Proxy&) = delete;
  Proxy& operator=(const Proxy&) = delete;

  // Starts the pipeline threads only; requests can then be fed via handle().
  void start_pipeline() {
    if (pipeline_started_.exchange(true)) return;
    window_.start();
    dedup_thread_ = std::thread([this] { run_dedup_stage(); });
    for (std::size_t i = 0; i < cfg_.backend.max_connections; ++i) {
      forward_threads_.emplace_back([this] { run_forward_worker(); });
    }
    fanout_thread_ = std::thread([this] { run_fanout_stage(); });
    reporter_ = std::jthread([this](std::stop_token st) { run_reporter(st); });
  }

  // Binds the listener and serves in a background thread. Returns the bound
  // port. Throws std::runtime_error when the address cannot be bound.
  int start() {
    start_pipeline();
    server_ = std::make_unique<httplib::Server>();
    server_->new_task_queue = [this] {
      return new CountingTaskQueue(cfg_.handler_threads, [this] { metrics_.record(Counter::ConnectionAttempts); });
    };
    server_->set_keep_alive_timeout(cfg_.keep_alive_timeout_sec);
    server_->set_payload_max_length(64u << 20);
    server_->Get(cfg_.health_path, [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(health_json().dump(), "application/json");
    });
    server_->Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
      HttpReply reply = handle(req.body, to_header_map(req.headers));
      res.status = reply.status;
      res.set_content(std::move(reply.body), reply.content_type);
    });
    int port = cfg_.listen_port;
    if (port == 0) {
      port = server_->bind_to_any_port(cfg_.listen_host);
    } else if (!server_->bind_to_port(cfg_.listen_host, port)) {
      port = -1;
    }
    if (port < 0) throw std::runtime_error("cannot bind " + cfg_.listen_host + ":" + std::to_string(cfg_.listen_port));
    port_ = port;
    listen_thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port;
  }

  // Graceful shutdown: stop accepting, let in-flight requests finish, drain
  // every stage. Idempotent.
  void stop() {
    std::lock_guard lock(stop_mu_);
    if (stopped_) return;
    stopped_ = true;
    if (server_) {
      server_->stop();
      if (listen_thread_.joinable()) listen_thread_.join();
    }
    if (!pipeline_started_) return;
    window_.stop();
    batches_.close();
    if (dedup_thread_.joinable()) dedup_thread_.join();
    forward_q_.close();
    for (auto& t : forward_threads_) t.join();
    fanout_q_.close();
    if (fanout_thread_.joinable()) fanout_thread_.join();
    reporter_.request_stop();
    if (reporter_.joinable()) reporter_.join();
    push_snapshot(metrics_.snapshot());
  }

  // One request through the full pipeline; blocks until its reply is ready.
  // This is what the HTTP handler runs.
  HttpReply handle(std::string_view body, const HeaderMap& headers) {
    TimePoint received = Clock::now();
    metrics_.record(Counter::Requests);
    metrics_.record(Counter::BytesReceived, body.size());
    received_.fetch_add(1, std::memory_order_relaxed);

    HttpReply reply;
    try {
      SoapRequest req = parse_request(body, headers);
      if (req.content_type.empty()) req.content_type = "text/xml; charset=utf-8";
      req.request_id = RequestId{next_id_.fetch_add(1, std::memory_order_relaxed)};
      reply = await_reply(std::move(req));
    } catch (const SoapError& e) {
      parse_faults_.fetch_add(1, std::memory_order_relaxed);
      metrics_.record(Counter::Faults);
      reply = fault_reply(500, fault_code_for(e.kind()), e.what());
    }

    metrics_.record(Counter::Responses);
    metrics_.record(Counter::BytesSent, reply.body.size());
    metrics_.record(Timing::ResponseTime, Clock::now() - received);
    return reply;
  }

  nlohmann::json health_json() const {
    auto c = counters();
    auto l = ledger();
    nlohmann::json j;
    j["mode"] = to_string(metrics_.gate_mode());
    j["gate"] = {{"ewma_ratio", gate_ewma_ratio_.load()}};
    j["counters"] = {{"received", c.received},          {"parse_faults", c.parse_faults},
                     {"admitted", c.admitted},          {"bypassed", c.bypassed},
                     {"batches", c.batches},            {"backend_calls", c.backend_calls},
                     {"backend_failures", c.backend_failures}, {"cache_hits", c.cache_hits},
                     {"duplicates_served", c.duplicates_served}};
    j["ledger"] = {{"registered", l.registered},
                   {"delivered", l.delivered},
                   {"duplicate_deliveries", l.duplicate_deliveries},
                   {"abandoned", l.abandoned},
                   {"late_deliveries", l.late_deliveries},
                   {"outstanding", l.outstanding}};
    if (auto last = latest_snapshot()) {
      const auto& s = *last;
      j["last_interval"] = {{"interval_start_s", s.start_s},
                            {"interval_end_s", s.end_s},
                            {"bytes_received_per_sec", s.bytes_received_per_sec},
                            {"bytes_sent_per_sec", s.bytes_sent_per_sec},
                            {"total_bytes_per_sec", s.total_bytes_per_sec},
                            {"connection_attempts_per_sec", s.connection_attempts_per_sec},
                            {"requests_per_sec", s.requests_per_sec},
                            {"backend_calls_per_sec", s.backend_calls_per_sec},
                            {"duplicate_ratio_mean", s.duplicate_ratio_mean},
                            {"response_time_ms",
                             {{"mean", s.response_time_ms.mean},
                              {"p50", s.response_time_ms.p50},
                              {"p95", s.response_time_ms.p95},
                              {"max", s.response_time_ms.max}}},
                            {"gate_mode", to_string(s.gate_mode)},
                            {"cache_hit_rate", s.cache_hit_rate}};
    }
    return j;
  }

  ProxyCounters counters() const {
    return {received_.load(),      parse_faults_.load(),     admitted_.load(),
            bypassed_.load(),      batches_seen_.load(),     backend_calls_.load(),
            backend_failures_.load(), cache_hits_.load(),    duplicates_served_.load()};
  }

  DeliveryLedger ledger() const { return registry_.ledger(); }

  std::vector<BatchRecord> batch_log() const {
    std::lock_guard lock(log_mu_);
    return {batch_log_.begin(), batch_log_.end()};
  }

  std::vector<MetricsSnapshot> history() const {
    std::lock_guard lock(log_mu_);
    return {history_.begin(), history_.end()};
  }

  std::optional<MetricsSnapshot> latest_snapshot() const {
    std::lock_guard lock(log_mu_);
    if (history_.empty()) return std::nullopt;
    return history_.back();
  }

  Metrics& metrics() noexcept { return metrics_; }
  const ProxyConfig& config() const noexcept { return cfg_; }
  int port() const noexcept { return port_; }

 private:
  struct BatchJob {
    WindowBatch<SoapRequest> batch;
    DedupResult result;
    GateMode mode = GateMode::Sem;
    bool bypass = false;
    std::vector<HttpReply> replies;  // per group
    std::atomic<std::size_t> remaining{0};
  };

  struct ForwardTask {
    std::shared_ptr<BatchJob> job;
    std::size_t group = 0;
  };

  struct FanoutTask {
    std::shared_ptr<BatchJob> job;
    std::optional<std::size_t> group;  // empty: deliver the batch's cache hits
  };

  HttpReply await_reply(SoapRequest req) {
    RequestId id = req.request_id;
    auto future = registry_.enroll(id);
    if (window_.admit(req) == AdmitResult::Accepted) {
      admitted_.fetch_add(1, std::memory_order_relaxed);
    } else {
      // Windowing cannot take it: skip coalescing, never drop.
      bypassed_.fetch_add(1, std::memory_order_relaxed);
      metrics_.record(Counter::Overflows);
      dispatch_bypass(std::move(req));
    }
    auto limit = cfg_.window.window + 2 * cfg_.backend.request_timeout + std::chrono::seconds(1);
    if (future.wait_for(limit) == std::future_status::timeout && registry_.abandon(id)) {
      metrics_.record(Counter::ClientDisconnects);
      return fault_reply(504, "soap:Server.Timeout", "no reply from pipeline within deadline");
    }
    return future.get();
  }

  void dispatch_bypass(SoapRequest req) {
    auto job = std::make_shared<BatchJob>();
    job->bypass = true;
    job->mode = GateMode::Passthrough;
    job->batch.batch_id = UINT64_MAX;
    job->batch.requests.push_back(std::move(req));
    job->result.batch_size = 1;
    job->result.groups.push_back({0, {}, std::nullopt});
    job->replies.resize(1);
    job->remaining = 1;
    RequestId id = job->batch.requests.front().request_id;
    if (!forward_q_.push(ForwardTask{std::move(job), 0})) {
      registry_.deliver(id, fault_reply(503, "soap:Server.Unavailable", "proxy is shutting down"));
    }
  }

  void run_dedup_stage() {
    std::size_t passthrough_batches = 0;
    while (auto batch = batches_.pop()) {
      batches_seen_.fetch_add(1, std::memory_order_relaxed);
      metrics_.record(Counter::Batches);
      for (const auto& r : batch->requests) metrics_.record(Timing::WindowWait, batch->flushed_at - r.arrival_time);

      feed_backend_samples();
      GateMode mode = GateMode::Sem;
      if (cfg_.mode == ModePolicy::Adaptive) {
        mode = gate_.decide().mode;
      } else if (cfg_.mode == ModePolicy::Passthrough) {
        mode = GateMode::Passthrough;
      }
      metrics_.set_gate_mode(mode);

      auto job = std::make_shared<BatchJob>();
      job->mode = mode;
      TimePoint now = Clock::now();
      if (mode == GateMode::Sem) {
        auto t0 = thread_cpu_now();
        job->result = dedup_.dedup(*batch, now);
        observe(job->result, thread_cpu_now() - t0, 0);
      } else {
        job->result = passthrough_partition(*batch);
        if (cfg_.mode == ModePolicy::Adaptive && cfg_.gate_probe_interval > 0 &&
            ++passthrough_batches % cfg_.gate_probe_interval == 0) {
          auto t0 = thread_cpu_now();
          auto probe = dedup_.dedup(*batch, now, false);
          std::size_t cached = 0;
          if (cfg_.dedup.cache_enabled) {
            for (const auto& g : probe.groups) cached += g.sequence && dedup_.cache().holds_fresh(*g.sequence, now);
          }
          observe(probe, thread_cpu_now() - t0, cached);
        }
      }
      if (batch->batch_id % 64 == 63) dedup_.evict_expired(now);

      job->batch = std::move(*batch);
      job->replies.resize(job->result.groups.size());
      job->remaining = job->result.groups.size();
      log_batch(*job);
      cache_hits_.fetch_add(job->result.cache_hits.size(), std::memory_order_relaxed);
      metrics_.record(Counter::CacheHits, job->result.cache_hits.size());

      if (!job->result.cache_hits.empty()) fanout_q_.push(FanoutTask{job, std::nullopt});
      for (std::size_t g = 0; g < job->result.groups.size(); ++g) forward_q_.push(ForwardTask{job, g});
    }
  }

  static DedupResult passthrough_partition(const WindowBatch<SoapRequest>& batch) {
    DedupResult r;
    r.batch_id = batch.batch_id;
    r.batch_size = batch.requests.size();
    r.groups.reserve(batch.requests.size());
    for (std::size_t i = 0; i < batch.requests.size(); ++i) r.groups.push_back({i, {}, std::nullopt});
    return r;
  }

  // The gate sees the share of requests that avoided (or, on a probe, would
  // have avoided) a backend call: in-window duplicates plus cache hits.
  // `cached` counts probe representatives the cache could have answered.
  void observe(const DedupResult& r, Nanos cost, std::size_t cached) {
    double saved = r.batch_size == 0 ? 0.0
                                     : static_cast<double>(r.batch_size - r.groups.size() + cached) /
                                           static_cast<double>(r.batch_size);
    gate_.observe({r.batch_id, saved, cost, r.batch_size});
    gate_ewma_ratio_.store(gate_.ewma_ratio(), std::memory_order_relaxed);
    metrics_.record_duplicate_ratio(r.duplicate_ratio);
  }

  void feed_backend_samples() {
    Nanos sum{0};
    std::uint64_t n = 0;
    {
      std::lock_guard lock(samples_mu_);
      std::swap(sum, backend_sum_);
      std::swap(n, backend_samples_);
    }
    if (n > 0) gate_.observe_backend_service(sum / static_cast<std::int64_t>(n));
  }

  void log_batch(const BatchJob& job) {
    BatchRecord rec{job.result.batch_id,
                    job.result.batch_size,
                    job.result.groups.size(),
                    job.result.cache_hits.size(),
                    job.result.groups.size(),
                    job.mode,
                    job.result.duplicate_ratio,
                    job.bypass};
    std::lock_guard lock(log_mu_);
    batch_log_.push_back(rec);
    if (batch_log_.size() > kBatchLogCapacity) batch_log_.pop_front();
  }

  void run_forward_worker() {
    httplib::Client client(backend_.scheme_host_port);
    client.set_keep_alive(true);
    auto to_timeval = [](Nanos d) {
      auto us = std::chrono::duration_cast<std::chrono::microseconds>(d).count();
      return std::pair<time_t, time_t>{us / 1000000, us % 1000000};
    };
    auto [cs, cus] = to_timeval(cfg_.backend.connect_timeout);
    auto [rs, rus] = to_timeval(cfg_.backend.request_timeout);
    client.set_connection_timeout(cs, cus);
    client.set_read_timeout(rs, rus);
    client.set_write_timeout(rs, rus);

    while (auto task = forward_q_.pop()) {
      const auto& job = *task->job;
      const SoapRequest& rep = job.batch.requests[job.result.groups[task->group].representative];
      httplib::Headers headers;
      if (!rep.soap_action.empty()) headers.emplace("SOAPAction", rep.soap_action);

      backend_calls_.fetch_add(1, std::memory_order_relaxed);
      metrics_.record(Counter::BackendCalls);
      auto t0 = Clock::now();
      auto res = client.Post(backend_.path, headers, rep.raw_envelope, rep.content_type);
      auto service = Clock::now() - t0;

      HttpReply reply;
      if (res) {
        reply.status = res->status;
        reply.content_type = res->get_header_value("Content-Type");
        if (reply.content_type.empty()) reply.content_type = "text/xml; charset=utf-8";
        reply.body = std::move(res->body);
        metrics_.record(Timing::BackendService, service);
        std::lock_guard lock(samples_mu_);
        backend_sum_ += service;
        ++backend_samples_;
      } else {
        backend_failures_.fetch_add(1, std::memory_order_relaxed);
        reply = fault_reply(503, "soap:Server.Unavailable", "backend unavailable: " + httplib::to_string(res.error()));
      }
      task->job->replies[task->group] = std::move(reply);
      fanout_q_.push(FanoutTask{std::move(task->job), task->group});
    }
  }

  void run_fanout_stage() {
    while (auto task = fanout_q_.pop()) {
      auto& job = *task->job;
      if (!task->group) {
        for (const auto& hit : job.result.cache_hits) {
          registry_.deliver(job.batch.requests[hit.request].request_id, *hit.response);
        }
        continue;
      }
      const auto& group = job.result.groups[*task->group];
      const HttpReply& reply = job.replies[*task->group];
      for (std::size_t idx : group.duplicates) registry_.deliver(job.batch.requests[idx].request_id, reply);
      duplicates_served_.fetch_add(group.duplicates.size(), std::memory_order_relaxed);
      if (job.remaining.fetch_sub(1) == 1 && job.mode == GateMode::Sem && !job.bypass) {
        dedup_.cache_store(job.result, job.replies, Clock::now());
      }
      registry_.deliver(job.batch.requests[group.representative].request_id, reply);
    }
  }

  void run_reporter(std::stop_token st) {
    std::mutex m;
    std::condition_variable_any cv;
    TimePoint next = Clock::now() + cfg_.metrics_interval;
    while (!st.stop_requested()) {
      std::unique_lock lock(m);
      cv.wait_until(lock, st, next, [] { return false; });
      if (st.stop_requested()) return;
      push_snapshot(metrics_.snapshot());
      next += cfg_.metrics_interval;
    }
  }

  void push_snapshot(MetricsSnapshot s) {
    std::lock_guard lock(log_mu_);
    history_.push_back(std::move(s));
    if (history_.size() > cfg_.metrics_history) history_.pop_front();
  }

  static constexpr std::size_t kBatchLogCapacity = 1 << 16;

  ProxyConfig cfg_;
  Endpoint backend_;
  Metrics metrics_;
  DedupEngine dedup_;
  Gate gate_;
  std::atomic<double> gate_ewma_ratio_{0.0};
  PendingRegistry registry_;

  BoundedQueue<WindowBatch<SoapRequest>> batches_;
  BoundedQueue<ForwardTask> forward_q_;
  BoundedQueue<FanoutTask> fanout_q_;
  WindowStage<SoapRequest> window_;

  std::mutex samples_mu_;
  Nanos backend_sum_{0};
  std::uint64_t backend_samples_ = 0;

  mutable std::mutex log_mu_;
  std::deque<BatchRecord> batch_log_;
  std::deque<MetricsSnapshot> history_;

  std::atomic<std::uint64_t> next_id_{1};
  std::atomic<std::uint64_t> received_{0};
  std::atomic<std::uint64_t> parse_faults_{0};
  std::atomic<std::uint64_t> admitted_{0};
  std::atomic<std::uint64_t> bypassed_{0};
  std::atomic<std::uint64_t> batches_seen_{0};
  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> backend_failures_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> duplicates_served_{0};

  std::unique_ptr<httplib::Server> server_;
  std::thread listen_thread_;
  std::thread dedup_thread_;
  std::vector<std::thread> forward_threads_;
  std::thread fanout_thread_;
  std::jthread reporter_;
  std::atomic<bool> pipeline_started_{false};
  std::mutex stop_mu_;
  bool stopped_ = false;
  int port_ = 0;
};

}  // namespace sem
