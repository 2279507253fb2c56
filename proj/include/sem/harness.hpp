#pragma once

// Load generation and a deterministic mock SOAP backend.
//
// Similarity model: each request carries the designated hot tuple
// (param_collection[0]) with probability similarity_pct/100, otherwise a
// fresh tuple that no other request in the run shares. Exact mode instead
// marks precisely round(similarity_pct% of the run) requests as hot, picked by
// a seeded shuffle; for a fixed seed the hot set only grows with similarity.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sem/csv.hpp"
#include "sem/http.hpp"
#include "sem/soap_codec.hpp"
#include "sem/types.hpp"

namespace sem {

// Trie-depth presets mirroring the parameter lengths of the reference sweep.
inline constexpr std::size_t kParamLengthPresets[] = {15, 25, 35, 65, 75};

enum class LoadMode { Concurrent, Serial };

struct ScenarioConfig {
  LoadMode mode = LoadMode::Concurrent;
  double rate = 100.0;  // requests per second; very large values fire at once
  std::size_t clients = 8;
  double duration_s = 1.0;
  std::optional<std::size_t> requests;  // overrides rate * duration
  double similarity_pct = 50.0;
  bool exact_similarity = false;
  std::vector<std::vector<std::string>> param_collection;  // empty: synthesized
  std::size_t param_length = 15;
  std::uint64_t seed = 1;
  std::string path = "/";
  std::optional<std::string> warmup_path;  // GET once per client before the run
  bool keep_samples = false;
  Nanos timeout{std::chrono::seconds(30)};

  std::size_t total_requests() const {
    if (requests) return *requests;
    if (rate <= 0.0 || duration_s <= 0.0) return 0;
    return static_cast<std::size_t>(std::llround(rate * duration_s));
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// The hot tuple uses digits so it can never equal a generated cold tuple,
// which is letters only.
inline std::vector<std::vector<std::string>> default_param_collection(std::size_t param_length) {
  std::string hot;
  for (std::size_t i = 0; i < std::max<std::size_t>(param_length, 1); ++i) hot.push_back(static_cast<char>('0' + i % 10));
  return {{hot}};
}

struct GeneratedRequest {
  std::string body;
  bool hot = false;
  std::vector<std::string> parameters;
};

// Deterministic in (cfg.seed, index, hot).
inline GeneratedRequest generate_request(const ScenarioConfig& cfg, std::size_t index, bool hot) {
  const auto collection =
      cfg.param_collection.empty() ? default_param_collection(cfg.param_length) : cfg.param_collection;
  if (collection.empty() || collection.front().empty()) throw std::invalid_argument("param_collection is empty");
  const auto& hot_tuple = collection.front();

  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(index)));
  std::uniform_real_distribution<double> coin(0.0, 100.0);
  coin(rng);
  GeneratedRequest out;
  out.hot = hot;
  if (out.hot) {
    out.parameters = hot_tuple;
  } else {
    // Base-26 index suffix makes cold tuples pairwise distinct; the rest of
    // the value is random filler.
    std::string suffix;
    for (std::size_t v = index;; v /= 26) {
      suffix.push_back(static_cast<char>('a' + v % 26));
      if (v < 26) break;
    }
    std::uniform_int_distribution<int> letter(0, 25);
    for (std::size_t p = 0; p < hot_tuple.size(); ++p) {
      std::size_t len = std::max(cfg.param_length, suffix.size() + 1);
      std::string value;
      value.reserve(len);
      while (value.size() + suffix.size() + 1 < len) value.push_back(static_cast<char>('a' + letter(rng)));
      value.push_back(static_cast<char>('a' + static_cast<int>(p % 26)));
      value += suffix;
      out.parameters.push_back(std::move(value));
    }
  }
  std::vector<std::string> names;
  for (std::size_t p = 0; p < out.parameters.size(); ++p) names.push_back(p == 0 ? "query" : "arg" + std::to_string(p));
  out.body = build_request("Search", names, out.parameters);
  return out;
}

// Bernoulli draw for request `index`.
inline bool draw_hot(const ScenarioConfig& cfg, std::size_t index) {
  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(index)));
  std::uniform_real_distribution<double> coin(0.0, 100.0);
  return coin(rng) < cfg.similarity_pct;
}

inline GeneratedRequest generate_request(const ScenarioConfig& cfg, std::size_t index) {
  return generate_request(cfg, index, draw_hot(cfg, index));
}

// Hot flag for each of the run's requests.
inline std::vector<bool> hot_flags(const ScenarioConfig& cfg) {
  const std::size_t total = cfg.total_requests();
  std::vector<bool> hot(total, false);
  if (!cfg.exact_similarity) {
    for (std::size_t i = 0; i < total; ++i) hot[i] = draw_hot(cfg, i);
    return hot;
  }
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x5EEDu));
  std::shuffle(order.begin(), order.end(), rng);
  auto count = static_cast<std::size_t>(std::llround(std::clamp(cfg.similarity_pct, 0.0, 100.0) / 100.0 *
                                                      static_cast<double>(total)));
  for (std::size_t k = 0; k < count; ++k) hot[order[k]] = true;
  return hot;
}

inline std::vector<GeneratedRequest> generate_run(const ScenarioConfig& cfg) {
  auto hot = hot_flags(cfg);
  std::vector<GeneratedRequest> out;
  out.reserve(hot.size());
  for (std::size_t i = 0; i < hot.size(); ++i) out.push_back(generate_request(cfg, i, hot[i]));
  return out;
}

struct RequestSample {
  std::size_t index = 0;
  bool ok = false;
  int status = 0;
  double latency_ms = 0.0;
  double sent_at_s = 0.0;  // relative to run start
  bool hot = false;
  std::uint64_t body_hash = 0;
  std::string parameter_key;  // operation + parameters, normalized
};

struct SecondBucket {
  std::uint64_t sent = 0;
  std::uint64_t succeeded = 0;
  std::uint64_t failed = 0;
  std::vector<double> latencies;
};

struct RunReport {
  std::uint64_t sent = 0;
  std::uint64_t succeeded = 0;
  std::uint64_t failed = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
  double achieved_rps = 0.0;
  double elapsed_s = 0.0;
  std::map<std::size_t, SecondBucket> per_second;
  std::vector<RequestSample> samples;  // filled when keep_samples
};

// Nearest-rank percentile over an unsorted copy.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

inline const std::vector<std::string>& report_csv_columns() {
  static const std::vector<std::string> cols = {"second", "sent",   "succeeded", "failed", "achieved_rps",
                                                "mean_ms", "p50_ms", "p95_ms",    "max_ms"};
  return cols;
}

inline void write_report_csv(std::ostream& os, const RunReport& r) {
  using csv::fixed;
  csv::write_row(os, report_csv_columns());
  for (const auto& [sec, b] : r.per_second) {
    double mean = 0.0;
    for (double l : b.latencies) mean += l;
    if (!b.latencies.empty()) mean /= static_cast<double>(b.latencies.size());
    double mx = b.latencies.empty() ? 0.0 : *std::max_element(b.latencies.begin(), b.latencies.end());
    csv::write_row(os, {std::to_string(sec), std::to_string(b.sent), std::to_string(b.succeeded),
                        std::to_string(b.failed), fixed(static_cast<double>(b.succeeded)), fixed(mean),
                        fixed(percentile(b.latencies, 0.5)), fixed(percentile(b.latencies, 0.95)), fixed(mx)});
  }
  csv::write_row(os, {"total", std::to_string(r.sent), std::to_string(r.succeeded), std::to_string(r.failed),
                      fixed(r.achieved_rps), fixed(r.mean_ms), fixed(r.p50_ms), fixed(r.p95_ms), fixed(r.max_ms)});
}

inline void export_report_csv(const RunReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_report_csv(out, r);
}

namespace detail {

inline void configure_client(httplib::Client& c, Nanos timeout) {
  auto us = std::chrono::duration_cast<std::chrono::microseconds>(timeout).count();
  c.set_keep_alive(true);
  c.set_connection_timeout(us / 1000000, us % 1000000);
  c.set_read_timeout(us / 1000000, us % 1000000);
  c.set_write_timeout(us / 1000000, us % 1000000);
}

}  // namespace detail

// Concurrent: open-loop schedule (request i due at i/rate) spread over
// `clients` connections. Serial: one connection, each request sent after the
// previous reply (and not before its scheduled time).
inline RunReport run_scenario(const ScenarioConfig& cfg, const std::string& target_url) {
  RunReport report;
  const std::size_t total = cfg.total_requests();
  if (total == 0) return report;
  const Endpoint target = Endpoint::parse(target_url);
  const std::string path = cfg.path == "/" ? target.path : cfg.path;

  // Pre-generate so request construction is not on the timed path.
  const std::vector<GeneratedRequest> requests = generate_run(cfg);

  std::vector<RequestSample> samples(total);
  const std::size_t lanes = cfg.mode == LoadMode::Serial ? 1 : std::max<std::size_t>(1, std::min(cfg.clients, total));
  std::atomic<std::size_t> ready{0};
  std::atomic<bool> go{false};
  TimePoint start{};
  std::mutex start_mu;

  auto lane_fn = [&](std::size_t lane) {
    httplib::Client client(target.scheme_host_port);
    detail::configure_client(client, cfg.timeout);
    if (cfg.warmup_path) client.Get(*cfg.warmup_path);
    ready.fetch_add(1);
    while (!go.load(std::memory_order_acquire)) std::this_thread::yield();
    TimePoint t0;
    {
      std::lock_guard lock(start_mu);
      t0 = start;
    }
    for (std::size_t i = lane; i < total; i += lanes) {
      TimePoint due = t0;
      if (cfg.rate > 0.0 && std::isfinite(cfg.rate)) {
        due += std::chrono::duration_cast<Nanos>(std::chrono::duration<double>(static_cast<double>(i) / cfg.rate));
      }
      std::this_thread::sleep_until(due);
      auto& s = samples[i];
      s.index = i;
      s.hot = requests[i].hot;
      auto sent = Clock::now();
      s.sent_at_s = std::chrono::duration<double>(sent - t0).count();
      auto res = client.Post(path, requests[i].body, "text/xml; charset=utf-8");
      s.latency_ms = to_ms(Clock::now() - sent);
      if (res) {
        s.status = res->status;
        s.ok = res->status == 200 && !is_fault(res->body);
        s.body_hash = fnv1a64(res->body);
      }
      if (cfg.keep_samples) {
        if (auto seq = try_build_parameter_sequence("Search", requests[i].parameters)) s.parameter_key = seq->bytes;
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(lanes);
  for (std::size_t l = 0; l < lanes; ++l) threads.emplace_back(lane_fn, l);
  while (ready.load() < lanes) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  {
    std::lock_guard lock(start_mu);
    start = Clock::now();
  }
  go.store(true, std::memory_order_release);
  for (auto& t : threads) t.join();
  TimePoint end = Clock::now();

  std::vector<double> ok_latencies;
  for (const auto& s : samples) {
    ++report.sent;
    auto& bucket = report.per_second[static_cast<std::size_t>(s.sent_at_s)];
    ++bucket.sent;
    if (s.ok) {
      ++report.succeeded;
      ++bucket.succeeded;
      bucket.latencies.push_back(s.latency_ms);
      ok_latencies.push_back(s.latency_ms);
    } else {
      ++report.failed;
      ++bucket.failed;
    }
  }
  report.elapsed_s = std::chrono::duration<double>(end - start).count();
  report.achieved_rps = report.elapsed_s > 0.0 ? static_cast<double>(report.succeeded) / report.elapsed_s : 0.0;
  if (!ok_latencies.empty()) {
    double sum = 0.0;
    for (double l : ok_latencies) sum += l;
    report.mean_ms = sum / static_cast<double>(ok_latencies.size());
    report.p50_ms = percentile(ok_latencies, 0.50);
    report.p95_ms = percentile(ok_latencies, 0.95);
    report.max_ms = *std::max_element(ok_latencies.begin(), ok_latencies.end());
  }
  if (cfg.keep_samples) report.samples = std::move(samples);
  return report;
}

struct MockBackendConfig {
  double compute_delay_ms = 0.0;
  std::size_t rows_per_response = 10;
  double per_row_serialize_cost_us = 0.0;
  double per_byte_serialize_cost_ns = 0.0;  // 0 keeps the pure per-row model
  std::size_t threads = 8;        // requests served concurrently
  std::size_t connections = 512;  // connection-handling threads
  bool record_bodies = false;
};

// Result set for Search, derived only from the normalized parameter sequence
// so that requests the proxy considers identical get identical bytes.
inline ResultSet mock_search_results(const std::vector<std::string>& parameters, std::size_t rows) {
  std::string query;
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    if (i != 0) query.push_back(' ');
    append_lowered(query, parameters[i]);
  }
  std::uint64_t h = fnv1a64(query);
  ResultSet rs;
  rs.columns = {"rank", "title", "url", "snippet"};
  for (std::size_t k = 0; k < rows; ++k) {
    std::uint64_t r = splitmix64(h + k);
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(r));
    rs.rows.push_back({std::to_string(k + 1), query + " result " + std::to_string(r % 100000),
                       "http://example.org/" + std::string(hex) + "/" + std::to_string(k),
                       "... " + query + " ... " + query + " ..."});
  }
  return rs;
}

class MockBackend {
 public:
  explicit MockBackend(MockBackendConfig cfg = {})
      : cfg_(cfg),
        slots_(static_cast<std::ptrdiff_t>(cfg.threads)) {
    if (cfg_.threads == 0 || cfg_.connections == 0) throw std::invalid_argument("mock backend needs threads");
  }
  ~MockBackend() { stop(); }

  MockBackend(const MockBackend&) = delete;
  MockBackend& operator=(const MockBackend&) = delete;

  // Returns the bound port; port 0 picks a free one.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    server_ = std::make_unique<httplib::Server>();
    server_->new_task_queue = [this] { return new httplib::ThreadPool(cfg_.connections); };
    server_->set_keep_alive_timeout(1);
    server_->Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
      HttpReply reply = serve(req.body, to_header_map(req.headers));
      res.status = reply.status;
      res.set_content(std::move(reply.body), reply.content_type);
    });
    int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("mock backend cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    port_ = bound;
    return bound;
  }

  void stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
    server_.reset();
  }

  // Request handling without the network; also used by the HTTP handler.
  HttpReply serve(std::string_view body, const HeaderMap& headers = {}) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    if (cfg_.record_bodies) {
      std::lock_guard lock(mu_);
      bodies_.emplace_back(body);
    }
    SoapRequest req;
    try {
      req = parse_request(body, headers);
    } catch (const SoapError& e) {
      return {500, "text/xml; charset=utf-8", build_fault("soap:Client", e.what())};
    }
    if (req.operation == "Ping") return {200, "text/xml; charset=utf-8", build_response({}, "Ping")};
    if (req.operation != "Search") {
      return {500, "text/xml; charset=utf-8", build_fault("soap:Client", "unknown operation " + req.operation)};
    }
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};
    if (cfg_.compute_delay_ms > 0.0) std::this_thread::sleep_for(from_ms(cfg_.compute_delay_ms));
    ResultSet rs = mock_search_results(req.parameters, cfg_.rows_per_response);
    std::string out = build_response(rs, "Search");
    double serialize_us = static_cast<double>(rs.rows.size()) * cfg_.per_row_serialize_cost_us +
                          static_cast<double>(out.size()) * cfg_.per_byte_serialize_cost_ns / 1000.0;
    if (serialize_us > 0.0) std::this_thread::sleep_for(from_ms(serialize_us / 1000.0));
    return {200, "text/xml; charset=utf-8", std::move(out)};
  }

  std::uint64_t calls() const noexcept { return calls_.load(); }
  void reset_calls() noexcept { calls_.store(0); }

  std::vector<std::string> bodies() const {
    std::lock_guard lock(mu_);
    return bodies_;
  }

  void clear_bodies() {
    std::lock_guard lock(mu_);
    bodies_.clear();
  }

  int port() const noexcept { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  const MockBackendConfig& config() const noexcept { return cfg_; }

 private:
  MockBackendConfig cfg_;
  std::counting_semaphore<> slots_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<std::uint64_t> calls_{0};
  mutable std::mutex mu_;
  std::vector<std::string> bodies_;
  int port_ = 0;
};

}  // namespace sem
