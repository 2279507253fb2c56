// Acceptance checks, one PASS/FAIL line per criterion. Arguments select a
// subset by number; no arguments runs all ten. Exit status is the number of
// failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <latch>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "sem/dedup_engine.hpp"
#include "sem/gate.hpp"
#include "sem/harness.hpp"
#include "sem/param_trie.hpp"
#include "sem/proxy_core.hpp"

namespace {

using namespace std::chrono_literals;

// Pinned tolerances.
constexpr std::size_t kOracleBatches = 10000;
constexpr std::size_t kMaxBatchSize = 4096;
constexpr double kOracleBudgetS = 60.0;
constexpr std::size_t kMinTrieCases = 100000;
constexpr std::size_t kSituationSize = 1000;
constexpr std::uint64_t kSituationCTarget = 500;
constexpr std::uint64_t kSituationCTolerance = 10;
constexpr double kMinThroughputRatio = 2.0;
constexpr int kThroughputTrials = 3;
constexpr int kMaxInversionsPerColumn = 1;
constexpr double kSweepBudgetS = 15 * 60.0;
constexpr double kMaxLookupTimeRatio = 2.0;
constexpr int kExpectedGateTransitions = 2;
constexpr double kWindowMs = 2.0;
constexpr double kWindowP95LimitMs = 2 * kWindowMs;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(sem::TimePoint t0) { return std::chrono::duration<double>(sem::Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) { return sem::csv::fixed(v, digits); }

void progress(const std::string& line) { std::cerr << "  .. " << line << std::endl; }

// Evidence gathered from every run that goes through a live proxy.
struct Audit {
  std::uint64_t proxy_runs = 0;
  std::uint64_t responses_checked = 0;
  std::uint64_t duplicates_checked = 0;
  std::uint64_t mismatches = 0;
  std::uint64_t client_requests = 0;
  std::uint64_t client_unanswered = 0;
  sem::DeliveryLedger ledger;

  void add_ledger(const sem::DeliveryLedger& l) {
    ++proxy_runs;
    ledger.registered += l.registered;
    ledger.delivered += l.delivered;
    ledger.duplicate_deliveries += l.duplicate_deliveries;
    ledger.abandoned += l.abandoned;
    ledger.late_deliveries += l.late_deliveries;
    ledger.outstanding += l.outstanding;
  }

  // Every 200 reply must carry exactly the bytes the backend produces for its
  // parameters; a reply whose key was already seen in the run is a duplicate.
  void add_run(const sem::ScenarioConfig& cfg, const sem::RunReport& report, std::size_t rows) {
    auto requests = sem::generate_run(cfg);
    std::unordered_map<std::string, std::uint64_t> expected;
    for (const auto& s : report.samples) {
      ++client_requests;
      if (s.status == 0) ++client_unanswered;
      if (s.status != 200) continue;
      const auto& params = requests[s.index].parameters;
      auto key = sem::try_build_parameter_sequence("Search", params)->bytes;
      auto [it, fresh] = expected.try_emplace(key, 0);
      if (fresh) {
        it->second = sem::fnv1a64(sem::build_response(sem::mock_search_results(params, rows), "Search"));
      } else {
        ++duplicates_checked;
      }
      ++responses_checked;
      if (s.body_hash != it->second) ++mismatches;
    }
  }
};

Audit g_audit;
volatile std::size_t sink = 0;

// Mock backend plus a proxy in front of it, both on ephemeral ports.
class Rig {
 public:
  Rig(sem::MockBackendConfig backend_cfg, sem::ProxyConfig proxy_cfg) : backend_(backend_cfg) {
    backend_.start();
    proxy_cfg.listen_port = 0;
    proxy_cfg.backend.base_url = backend_.url();
    proxy_ = std::make_unique<sem::Proxy>(proxy_cfg);
    port_ = proxy_->start();
  }
  ~Rig() { finish(); }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  sem::MockBackend& backend() { return backend_; }
  sem::Proxy& proxy() { return *proxy_; }

  sem::RunReport run(sem::ScenarioConfig cfg) {
    cfg.keep_samples = true;
    cfg.warmup_path = proxy_->config().health_path;
    auto report = sem::run_scenario(cfg, url());
    g_audit.add_run(cfg, report, backend_.config().rows_per_response);
    return report;
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    proxy_->stop();
    g_audit.add_ledger(proxy_->ledger());
  }

 private:
  sem::MockBackend backend_;
  std::unique_ptr<sem::Proxy> proxy_;
  int port_ = 0;
  bool finished_ = false;
};

// ---------------------------------------------------------------- 1

char random_byte(std::mt19937_64& rng) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 -_.,;:!?@#$%&*()[]{}<>'\"/\\|~^`+=";
  std::uniform_int_distribution<int> pick(0, 99);
  int r = pick(rng);
  if (r < 90) return alphabet[static_cast<std::size_t>(rng() % alphabet.size())];
  if (r < 97) return static_cast<char>(0x80 + rng() % 0x80);  // UTF-8 / Latin-1 bytes
  if (r < 99) return static_cast<char>(1 + rng() % 0x1E);      // control bytes
  return '\x1F';
}

std::string flip_case(std::string s, std::mt19937_64& rng) {
  for (char& c : s) {
    if (rng() % 2 == 0) continue;
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    else if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

// Independent normalization: ASCII-only folding joined by the unit separator;
// nullopt when any value carries the separator itself.
std::optional<std::string> oracle_key(const std::string& op, const std::vector<std::string>& params) {
  auto fold = [](const std::string& s, std::string& out) {
    for (unsigned char c : s) out.push_back(static_cast<char>(c >= 0x41 && c <= 0x5A ? c + 0x20 : c));
  };
  std::string key;
  if (op.find('\x1F') != std::string::npos) return std::nullopt;
  fold(op, key);
  for (const auto& p : params) {
    if (p.find('\x1F') != std::string::npos) return std::nullopt;
    key.push_back('\x1F');
    fold(p, key);
  }
  return key;
}

Outcome dedup_oracle_equivalence() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> size_dist(1, kMaxBatchSize);
  sem::DedupEngine engine;
  std::uint64_t mismatches = 0;
  std::uint64_t requests = 0;
  auto t0 = sem::Clock::now();
  for (std::size_t b = 0; b < kOracleBatches; ++b) {
    const std::size_t size = size_dist(rng);
    // A pool of distinct tuples; requests draw from it with a skew so that
    // groups of every size appear.
    std::size_t pool_size = 1 + rng() % size;
    std::vector<std::pair<std::string, std::vector<std::string>>> pool;
    for (std::size_t k = 0; k < pool_size; ++k) {
      std::string op = rng() % 8 == 0 ? "Lookup" : "Search";
      std::vector<std::string> params(rng() % 4);
      for (auto& p : params) {
        std::size_t len = rng() % 24;
        for (std::size_t i = 0; i < len; ++i) p.push_back(random_byte(rng));
      }
      pool.emplace_back(std::move(op), std::move(params));
    }
    sem::WindowBatch<sem::SoapRequest> batch;
    batch.batch_id = b;
    batch.requests.resize(size);
    std::geometric_distribution<std::size_t> skew(4.0 / static_cast<double>(pool_size + 3));
    for (std::size_t i = 0; i < size; ++i) {
      const auto& [op, params] = pool[std::min(skew(rng), pool_size - 1)];
      auto& r = batch.requests[i];
      r.request_id = sem::RequestId{i};
      r.operation = rng() % 4 == 0 ? flip_case(op, rng) : op;
      r.parameters = params;
      if (rng() % 4 == 0) {
        for (auto& p : r.parameters) p = flip_case(p, rng);
      }
    }
    requests += size;

    auto result = engine.dedup(batch, sem::Clock::now());

    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> expected;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < size; ++i) {
      auto key = oracle_key(batch.requests[i].operation, batch.requests[i].parameters);
      if (!key) {
        expected.push_back({i, {}});
        continue;
      }
      auto [it, fresh] = index.try_emplace(*key, expected.size());
      if (fresh) {
        expected.push_back({i, {}});
      } else {
        expected[it->second].second.push_back(i);
      }
    }
    bool same = result.groups.size() == expected.size() && result.cache_hits.empty();
    for (std::size_t g = 0; same && g < expected.size(); ++g) {
      same = result.groups[g].representative == expected[g].first && result.groups[g].duplicates == expected[g].second;
    }
    double expected_ratio = static_cast<double>(size - expected.size()) / static_cast<double>(size);
    if (!same || result.duplicate_ratio != expected_ratio) ++mismatches;
  }
  double elapsed = seconds_since(t0);
  return {mismatches == 0 && elapsed < kOracleBudgetS,
          std::to_string(kOracleBatches) + " batches, " + std::to_string(requests) + " requests, " +
              std::to_string(mismatches) + " mismatches, " + fmt(elapsed, 1) + " s (limit " + fmt(kOracleBudgetS, 0) +
              " s)"};
}

// ---------------------------------------------------------------- 2

Outcome trie_properties() {
  std::mt19937_64 rng(77);
  std::uint64_t cases = 0;
  std::uint64_t failures = 0;
  auto check = [&](bool ok) {
    ++cases;
    if (!ok) ++failures;
  };
  auto random_key = [&](std::size_t max_len, int alphabet) {
    std::string k(1 + rng() % max_len, 'a');
    for (char& c : k) c = static_cast<char>(alphabet == 256 ? rng() % 256 : 'a' + rng() % alphabet);
    return k;
  };

  // Set-membership oracle, including prefixes and extensions of members.
  for (int round = 0; round < 400; ++round) {
    int alphabet = round % 3 == 0 ? 256 : 2 + round % 5;
    std::size_t max_len = 1 + rng() % 12;
    sem::ByteTrie<std::uint32_t> trie;
    std::set<std::string> oracle;
    std::size_t n = 1 + rng() % 200;
    for (std::size_t i = 0; i < n; ++i) {
      auto k = random_key(max_len, alphabet);
      auto out = trie.insert(k, static_cast<std::uint32_t>(i));
      bool fresh = oracle.insert(k).second;
      check((out.status == sem::InsertStatus::New) == fresh);
    }
    check(trie.size() == oracle.size());
    for (int q = 0; q < 100; ++q) {
      auto k = random_key(max_len + 2, alphabet);
      check(trie.contains(k) == oracle.contains(k));
    }
    for (const auto& k : oracle) {
      check(trie.contains(k));
      std::string prefix = k.substr(0, k.size() - 1);
      if (!prefix.empty()) check(trie.contains(prefix) == oracle.contains(prefix));
      check(trie.contains(k + "z") == oracle.contains(k + "z"));
    }
    std::vector<std::string> listed;
    trie.for_each([&](std::string_view k, std::uint32_t) { listed.emplace_back(k); });
    check(listed == std::vector<std::string>(oracle.begin(), oracle.end()));
  }

  // End-marker: a path that exists only as a prefix is not a member.
  for (int round = 0; round < 5000; ++round) {
    auto k = random_key(10, 4) + random_key(5, 4);
    std::size_t cut = 1 + rng() % (k.size() - 1);
    sem::ByteTrie<std::uint32_t> trie;
    trie.insert(k, 1);
    check(!trie.contains(k.substr(0, cut)));
    check(trie.find(k.substr(0, cut)) == nullptr);
    trie.insert(k.substr(0, cut), 2);
    check(trie.contains(k.substr(0, cut)));
    check(*trie.find(k) == 1 && *trie.find(k.substr(0, cut)) == 2);
  }

  // Re-inserting is idempotent and keeps the first payload.
  for (int round = 0; round < 2000; ++round) {
    sem::ByteTrie<std::uint32_t> trie;
    std::vector<std::string> keys;
    for (int i = 0; i < 10; ++i) keys.push_back(random_key(8, 256));
    for (std::size_t i = 0; i < keys.size(); ++i) trie.insert(keys[i], static_cast<std::uint32_t>(i));
    auto before = trie.stats();
    for (std::size_t i = 0; i < keys.size(); ++i) {
      auto out = trie.insert(keys[i], 999);
      check(out.status == sem::InsertStatus::Duplicate);
      check(out.payload != 999 && keys[out.payload] == keys[i]);
    }
    check(trie.stats() == before);
  }

  // Compression keeps the language, never grows, and ranks in key order.
  for (int round = 0; round < 600; ++round) {
    int alphabet = round % 2 == 0 ? 2 : 26;
    sem::ByteTrie<std::uint32_t> trie;
    std::set<std::string> oracle;
    std::size_t n = rng() % 150;
    for (std::size_t i = 0; i < n; ++i) {
      auto k = random_key(10, alphabet);
      trie.insert(k, 0);
      oracle.insert(k);
    }
    auto dag = sem::compress(trie);
    check(dag.node_count() <= trie.node_count());
    check(dag.key_count() == oracle.size());
    std::vector<std::string> listed;
    dag.for_each([&](std::string_view k) { listed.emplace_back(k); });
    check(listed == std::vector<std::string>(oracle.begin(), oracle.end()));
    std::size_t r = 0;
    for (const auto& k : oracle) check(dag.rank(k) == r++);
    for (int q = 0; q < 60; ++q) {
      auto k = random_key(11, alphabet);
      check(dag.contains(k) == oracle.contains(k));
    }
  }

  return {failures == 0 && cases >= kMinTrieCases,
          std::to_string(cases) + " generated cases (minimum " + std::to_string(kMinTrieCases) + "), " +
              std::to_string(failures) + " failures"};
}

// ---------------------------------------------------------------- 3

sem::ProxyConfig one_window_proxy() {
  sem::ProxyConfig cfg;
  cfg.window.window = 10s;
  cfg.window.max_batch_size = kSituationSize;  // the last arrival closes the window
  cfg.handler_threads = kSituationSize + 64;
  cfg.keep_alive_timeout_sec = 30;
  return cfg;
}

sem::ScenarioConfig situation(double similarity) {
  sem::ScenarioConfig cfg;
  cfg.clients = kSituationSize;
  cfg.requests = kSituationSize;
  cfg.rate = 1e12;
  cfg.similarity_pct = similarity;
  cfg.exact_similarity = true;
  cfg.seed = 1;
  return cfg;
}

struct SituationResult {
  std::uint64_t backend_calls = 0;
  std::uint64_t ok = 0;
  std::size_t batches = 0;
};

SituationResult run_situation(double similarity) {
  Rig rig({.compute_delay_ms = 1, .rows_per_response = 10, .threads = 32}, one_window_proxy());
  auto report = rig.run(situation(similarity));
  rig.finish();
  return {rig.backend().calls(), report.succeeded, rig.proxy().batch_log().size()};
}

Outcome coalescing_count() {
  auto b = run_situation(100);
  progress("situation B: " + std::to_string(b.backend_calls) + " calls");
  auto a = run_situation(0);
  progress("situation A: " + std::to_string(a.backend_calls) + " calls");
  auto c = run_situation(50);
  progress("situation C: " + std::to_string(c.backend_calls) + " calls");
  auto c_low = kSituationCTarget - kSituationCTolerance;
  auto c_high = kSituationCTarget + kSituationCTolerance;
  bool pass = b.backend_calls == 1 && a.backend_calls == kSituationSize && c.backend_calls >= c_low &&
              c.backend_calls <= c_high && a.ok == kSituationSize && b.ok == kSituationSize && c.ok == kSituationSize;
  return {pass, "B=" + std::to_string(b.backend_calls) + " (want 1), A=" + std::to_string(a.backend_calls) +
                    " (want 1000), C=" + std::to_string(c.backend_calls) + " (want 500+-10); batches " +
                    std::to_string(b.batches) + "/" + std::to_string(a.batches) + "/" + std::to_string(c.batches) +
                    "; ok " + std::to_string(b.ok) + "/" + std::to_string(a.ok) + "/" + std::to_string(c.ok)};
}

// ---------------------------------------------------------------- 5

double throughput(sem::ModePolicy mode, bool cache, std::uint64_t& backend_calls) {
  sem::ProxyConfig pcfg;
  pcfg.mode = mode;
  pcfg.dedup.cache_enabled = cache;
  Rig rig({.compute_delay_ms = 1, .rows_per_response = 200, .per_row_serialize_cost_us = 50, .threads = 8}, pcfg);
  sem::ScenarioConfig cfg;
  cfg.clients = 64;
  cfg.rate = 1e12;
  cfg.requests = 3000;
  cfg.similarity_pct = 70;
  cfg.exact_similarity = true;
  cfg.seed = 5;
  auto report = rig.run(cfg);
  rig.finish();
  backend_calls = rig.backend().calls();
  return report.failed == 0 ? report.achieved_rps : 0.0;
}

double median_throughput(sem::ModePolicy mode, bool cache, std::uint64_t& backend_calls) {
  std::vector<std::pair<double, std::uint64_t>> runs;
  for (int i = 0; i < kThroughputTrials; ++i) {
    std::uint64_t calls = 0;
    double rps = throughput(mode, cache, calls);
    runs.emplace_back(rps, calls);
  }
  std::sort(runs.begin(), runs.end());
  backend_calls = runs[runs.size() / 2].second;
  return runs[runs.size() / 2].first;
}

Outcome throughput_trend() {
  std::uint64_t pass_calls = 0;
  std::uint64_t sem_calls = 0;
  std::uint64_t adaptive_calls = 0;
  double base = median_throughput(sem::ModePolicy::Passthrough, false, pass_calls);
  progress("passthrough " + fmt(base, 1) + " rps");
  double sem_rps = median_throughput(sem::ModePolicy::Sem, true, sem_calls);
  progress("sem " + fmt(sem_rps, 1) + " rps");
  double adaptive = throughput(sem::ModePolicy::Adaptive, true, adaptive_calls);
  progress("adaptive " + fmt(adaptive, 1) + " rps");
  double ratio = base > 0 ? sem_rps / base : 0.0;
  return {ratio >= kMinThroughputRatio,
          "passthrough " + fmt(base, 1) + " rps (" + std::to_string(pass_calls) + " backend calls), sem " +
              fmt(sem_rps, 1) + " rps (" + std::to_string(sem_calls) + " calls), ratio " + fmt(ratio, 2) +
              " (minimum " + fmt(kMinThroughputRatio, 1) + "); adaptive gate " + fmt(adaptive, 1) + " rps (" +
              std::to_string(adaptive_calls) + " calls), ratio " + fmt(base > 0 ? adaptive / base : 0.0, 2)};
}

// ---------------------------------------------------------------- 6

Outcome table_trend() {
  const std::vector<int> similarities{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  const std::vector<std::size_t> lengths(std::begin(sem::kParamLengthPresets), std::end(sem::kParamLengthPresets));
  std::map<std::pair<int, std::size_t>, double> mean_ms;
  auto t0 = sem::Clock::now();
  bool all_ok = true;
  for (std::size_t len : lengths) {
    for (int sim : similarities) {
      sem::ProxyConfig pcfg;
      pcfg.mode = sem::ModePolicy::Sem;
      pcfg.dedup.cache_enabled = true;
      pcfg.dedup.cache.ttl = 10ms;
      Rig rig({.compute_delay_ms = 1,
               .rows_per_response = 20,
               .per_row_serialize_cost_us = 50,
               .per_byte_serialize_cost_ns = 2000,
               .threads = 48},
              pcfg);
      sem::ScenarioConfig cfg;
      cfg.clients = 32;
      cfg.rate = 800;
      cfg.duration_s = 4.0;
      cfg.similarity_pct = sim;
      cfg.exact_similarity = true;
      cfg.param_length = len;
      cfg.seed = 11;
      auto report = rig.run(cfg);
      rig.finish();
      all_ok = all_ok && report.failed == 0;
      mean_ms[{sim, len}] = report.mean_ms;
    }
    std::ostringstream row;
    row << "length " << len << ":";
    for (int sim : similarities) row << ' ' << fmt(mean_ms[{sim, len}], 2);
    progress(row.str());
  }
  double elapsed = seconds_since(t0);

  // Similarity direction: each length column must be non-increasing.
  int worst_sim = 0;
  for (std::size_t len : lengths) {
    int inversions = 0;
    for (std::size_t i = 1; i < similarities.size(); ++i) {
      inversions += mean_ms[{similarities[i], len}] > mean_ms[{similarities[i - 1], len}];
    }
    worst_sim = std::max(worst_sim, inversions);
  }
  // Length direction: each similarity row must be non-decreasing.
  int worst_len = 0;
  for (int sim : similarities) {
    int inversions = 0;
    for (std::size_t i = 1; i < lengths.size(); ++i) {
      inversions += mean_ms[{sim, lengths[i]}] < mean_ms[{sim, lengths[i - 1]}];
    }
    worst_len = std::max(worst_len, inversions);
  }
  bool pass = all_ok && worst_sim <= kMaxInversionsPerColumn && worst_len <= kMaxInversionsPerColumn &&
              elapsed < kSweepBudgetS;
  std::ostringstream detail;
  detail << "50 cells in " << fmt(elapsed, 0) << " s; worst inversions: " << worst_sim
         << " along similarity, " << worst_len << " along length (allowed " << kMaxInversionsPerColumn
         << "); mean ms at 10%/100%: " << fmt(mean_ms[{10, 15}], 2) << "/" << fmt(mean_ms[{100, 15}], 2)
         << " (len 15), " << fmt(mean_ms[{10, 75}], 2) << "/" << fmt(mean_ms[{100, 75}], 2) << " (len 75)"
         << (all_ok ? "" : "; some requests failed");
  return {pass, detail.str()};
}

// ---------------------------------------------------------------- 7

Outcome lookup_scale() {
  std::mt19937_64 rng(3);
  auto make_key = [&] {
    std::vector<std::string> params(1 + rng() % 3);
    for (auto& p : params) {
      p.resize(10 + rng() % 40);
      for (char& c : p) c = static_cast<char>('a' + rng() % 26);
    }
    return sem::try_build_parameter_sequence("Search", params)->bytes;
  };
  std::vector<std::string> keys;
  std::set<std::string> distinct;
  while (keys.size() < 100000) {
    auto k = make_key();
    if (distinct.insert(k).second) keys.push_back(std::move(k));
  }
  // Both tries hold the same 1000 probe keys; the large one adds 99000 more.
  std::vector<std::string> probes(keys.begin(), keys.begin() + 1000);
  sem::ByteTrie<std::uint32_t> small;
  sem::ByteTrie<std::uint32_t> large;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i < probes.size()) small.insert(keys[i], static_cast<std::uint32_t>(i));
    large.insert(keys[i], static_cast<std::uint32_t>(i));
  }

  std::uint64_t visit_mismatches = 0;
  std::uint64_t lookups = 0;
  for (auto* trie : {&small, &large}) {
    for (const auto& k : trie == &small ? probes : keys) {
      trie->reset_visits();
      bool found = trie->contains(k);
      ++lookups;
      if (!found || trie->visits() != k.size()) ++visit_mismatches;
    }
  }

  std::shuffle(probes.begin(), probes.end(), rng);
  auto mean_ns = [&](const sem::ByteTrie<std::uint32_t>& trie, const std::vector<std::string>& qs) {
    std::vector<double> trials;
    std::size_t found = 0;
    for (int t = 0; t < 9; ++t) {
      auto t0 = sem::Clock::now();
      for (int rep = 0; rep < 50; ++rep) {
        for (const auto& q : qs) found += trie.contains(q);
      }
      trials.push_back(std::chrono::duration<double, std::nano>(sem::Clock::now() - t0).count() /
                       (50.0 * static_cast<double>(qs.size())));
    }
    sink = found;
    std::sort(trials.begin(), trials.end());
    return trials[trials.size() / 2];
  };
  double small_ns = mean_ns(small, probes);
  double large_ns = mean_ns(large, probes);
  double ratio = std::max(small_ns, large_ns) / std::min(small_ns, large_ns);

  // Uniform probes over every key of the large trie, for information.
  std::vector<std::string> spread;
  for (int i = 0; i < 1000; ++i) spread.push_back(keys[rng() % keys.size()]);
  double spread_ns = mean_ns(large, spread);

  return {visit_mismatches == 0 && ratio < kMaxLookupTimeRatio,
          std::to_string(lookups) + " lookups with visits == |key|, " + std::to_string(visit_mismatches) +
              " mismatches; mean lookup " + fmt(small_ns, 1) + " ns (10^3 keys) vs " + fmt(large_ns, 1) +
              " ns (10^5 keys), ratio " + fmt(ratio, 2) + " (limit " + fmt(kMaxLookupTimeRatio, 1) +
              "); uniform probes over 10^5 keys " + fmt(spread_ns, 1) + " ns"};
}

// ---------------------------------------------------------------- 8

std::string styled_body(const std::string& value, std::size_t variant) {
  // Same parameters, different bytes: spacing, comments and prefixes vary.
  std::string v = std::to_string(variant);
  return "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<!-- request " + v +
         " -->\n<e:Envelope xmlns:e=\"http://schemas.xmlsoap.org/soap/envelope/\">" + std::string(variant % 5, ' ') +
         "<e:Body><Search><query>" + value + "</query></Search></e:Body></e:Envelope>\n";
}

Outcome gate_behavior() {
  // Replay against the gate alone.
  sem::Gate gate;
  std::vector<double> trace;
  for (double level : {0.8, 0.0, 0.8}) trace.insert(trace.end(), 100, level);
  int transitions = 0;
  int band_violations = 0;
  sem::GateMode prev = gate.mode();
  std::vector<sem::GateMode> path{prev};
  for (std::size_t i = 0; i < trace.size(); ++i) {
    gate.observe({i, trace[i], sem::Nanos{0}, 100});
    auto mode = gate.decide().mode;
    if (mode != prev) {
      ++transitions;
      path.push_back(mode);
      bool crossed = mode == sem::GateMode::Passthrough ? gate.ewma_ratio() <= gate.config().exit
                                                        : gate.ewma_ratio() >= gate.config().enter;
      if (!crossed) ++band_violations;
    }
    prev = mode;
  }
  bool replay_ok = transitions == kExpectedGateTransitions && band_violations == 0 && path.size() == 3 &&
                   path[0] == sem::GateMode::Sem && path[1] == sem::GateMode::Passthrough &&
                   path[2] == sem::GateMode::Sem;

  // The same shape driven through a live proxy, one batch at a time.
  sem::ProxyConfig pcfg;
  pcfg.window.window = 10s;
  pcfg.window.max_batch_size = 10;
  Rig rig({.rows_per_response = 5, .record_bodies = true}, pcfg);
  sem::HeaderMap headers{{"Content-Type", "text/xml; charset=utf-8"}};
  std::size_t unique = 0;
  std::size_t variant = 0;
  std::uint64_t passthrough_batches = 0;
  std::uint64_t passthrough_requests = 0;
  std::uint64_t body_mismatches = 0;
  auto fire_batch = [&](double ratio) {
    // 10 requests; duplicate share 0.8 means two distinct values.
    std::vector<std::string> bodies;
    std::string shared = "hot" + std::to_string(unique++);
    for (int i = 0; i < 10; ++i) {
      bool dup = ratio > 0 && i < 9;
      bodies.push_back(styled_body(dup ? shared : "v" + std::to_string(unique++), variant++));
    }
    rig.backend().clear_bodies();
    std::vector<std::thread> threads;
    std::latch go(10);
    for (auto& b : bodies) {
      threads.emplace_back([&, body = b] {
        go.arrive_and_wait();
        rig.proxy().handle(body, headers);
      });
    }
    for (auto& t : threads) t.join();
    auto log = rig.proxy().batch_log();
    if (!log.empty() && log.back().mode == sem::GateMode::Passthrough) {
      ++passthrough_batches;
      passthrough_requests += bodies.size();
      auto seen = rig.backend().bodies();
      if (std::multiset<std::string>(seen.begin(), seen.end()) !=
          std::multiset<std::string>(bodies.begin(), bodies.end())) {
        ++body_mismatches;
      }
    }
  };
  for (double level : {0.8, 0.0, 0.8}) {
    for (int i = 0; i < 60; ++i) fire_batch(level);
  }
  rig.finish();
  auto log = rig.proxy().batch_log();
  int live_transitions = 0;
  for (std::size_t i = 1; i < log.size(); ++i) live_transitions += log[i].mode != log[i - 1].mode;
  bool live_ok = live_transitions == kExpectedGateTransitions && log.front().mode == sem::GateMode::Sem &&
                 log.back().mode == sem::GateMode::Sem && passthrough_batches > 0 && body_mismatches == 0;

  return {replay_ok && live_ok,
          "trace replay: " + std::to_string(transitions) + " transitions, " + std::to_string(band_violations) +
              " inside the band; live proxy: " + std::to_string(live_transitions) + " transitions over " +
              std::to_string(log.size()) + " batches, " + std::to_string(passthrough_requests) +
              " passthrough bodies checked, " + std::to_string(body_mismatches) + " batches altered"};
}

// ---------------------------------------------------------------- 10

Outcome window_latency() {
  sem::ProxyConfig pcfg;
  pcfg.window.window = sem::from_ms(kWindowMs);
  pcfg.handler_threads = kSituationSize + 64;
  pcfg.keep_alive_timeout_sec = 30;
  Rig rig({.compute_delay_ms = 1, .rows_per_response = 10, .threads = 32}, pcfg);
  auto report = rig.run(situation(0));
  rig.finish();
  auto wait = rig.proxy().metrics().total_latency(sem::Timing::WindowWait);
  return {wait.count == kSituationSize && wait.p95 <= kWindowP95LimitMs && report.failed == 0,
          "window " + fmt(kWindowMs, 0) + " ms, " + std::to_string(wait.count) + " requests, added latency p50 " +
              fmt(wait.p50, 3) + " ms, p95 " + fmt(wait.p95, 3) + " ms (limit " + fmt(kWindowP95LimitMs, 1) +
              "), max " + fmt(wait.max, 3) + " ms over " + std::to_string(rig.proxy().batch_log().size()) +
              " batches"};
}

// ---------------------------------------------------------------- 4 and 9

// A mixed run with the cache on, so the audit covers every delivery path even
// when the other criteria were not selected.
void audit_run() {
  sem::ProxyConfig pcfg;
  pcfg.dedup.cache_enabled = true;
  Rig rig({.compute_delay_ms = 2, .rows_per_response = 10, .threads = 16}, pcfg);
  sem::ScenarioConfig cfg;
  cfg.clients = 48;
  cfg.rate = 1500;
  cfg.requests = 3000;
  cfg.similarity_pct = 60;
  cfg.seed = 9;
  rig.run(cfg);
}

Outcome fanout_identity() {
  const auto& a = g_audit;
  return {a.responses_checked > 0 && a.duplicates_checked > 0 && a.mismatches == 0,
          std::to_string(a.duplicates_checked) + " duplicate responses (" + std::to_string(a.responses_checked) +
              " replies) across " + std::to_string(a.proxy_runs) + " proxy runs, " + std::to_string(a.mismatches) +
              " differ from the representative's bytes"};
}

Outcome exactly_once() {
  const auto& a = g_audit;
  const auto& l = a.ledger;
  bool pass = l.registered > 0 && l.duplicate_deliveries == 0 && l.outstanding == 0 &&
              l.delivered + l.abandoned == l.registered && a.client_unanswered == 0;
  return {pass, std::to_string(l.registered) + " admitted, " + std::to_string(l.delivered) + " delivered, " +
                    std::to_string(l.duplicate_deliveries) + " duplicate deliveries, " +
                    std::to_string(l.outstanding) + " outstanding, " + std::to_string(l.abandoned) +
                    " client disconnects; " + std::to_string(a.client_unanswered) + " of " +
                    std::to_string(a.client_requests) + " client requests unanswered"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  if (selected.empty()) {
    for (int i = 1; i <= 10; ++i) selected.insert(i);
  }

  const std::map<int, std::pair<std::string, Outcome (*)()>> criteria{
      {1, {"dedup-oracle-equivalence", dedup_oracle_equivalence}},
      {2, {"trie-properties", trie_properties}},
      {3, {"coalescing-count", coalescing_count}},
      {5, {"throughput-trend", throughput_trend}},
      {6, {"similarity-length-trend", table_trend}},
      {7, {"lookup-scale-independence", lookup_scale}},
      {8, {"gate-behavior", gate_behavior}},
      {10, {"windowing-latency-bound", window_latency}},
      {4, {"fanout-byte-identity", fanout_identity}},
      {9, {"exactly-once-delivery", exactly_once}},
  };

  if (selected.contains(4) || selected.contains(9)) audit_run();

  std::map<int, std::pair<std::string, Outcome>> results;
  // 4 and 9 audit the runs made by the others, so they are evaluated last.
  for (int id : {1, 2, 3, 5, 6, 7, 8, 10, 4, 9}) {
    if (!selected.contains(id)) continue;
    const auto& [name, fn] = criteria.at(id);
    std::cerr << "criterion " << id << " (" << name << ")" << std::endl;
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    results[id] = {name, out};
  }

  int failed = 0;
  for (const auto& [id, r] : results) {
    const auto& [name, out] = r;
    failed += !out.pass;
    std::printf("%s [%2d] %s: %s\n", out.pass ? "PASS" : "FAIL", id, name.c_str(), out.detail.c_str());
  }
  std::fflush(stdout);
  return failed;
}
