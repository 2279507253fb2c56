#pragma once

// Per-window duplicate detection and the persistent hot-response cache.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sem/param_trie.hpp"
#include "sem/soap_codec.hpp"
#include "sem/types.hpp"
#include "sem/windowing.hpp"

namespace sem {

struct CacheConfig {
  Nanos ttl{std::chrono::milliseconds(100)};
  std::size_t capacity = 1024;
  std::size_t compress_threshold_nodes = 4096;
};

struct ResponseCacheEntry {
  ParameterSequence sequence;
  std::shared_ptr<const HttpReply> response;
  std::uint64_t hit_count = 0;
  TimePoint stored_at{};
  Nanos ttl{};
  TimePoint last_hit{};
  bool live = false;

  bool fresh(TimePoint now) const noexcept { return live && now < stored_at + ttl; }
};

struct CacheStats {
  std::size_t entries = 0;
  std::size_t delta_nodes = 0;
  std::size_t frozen_nodes = 0;
  std::size_t frozen_keys = 0;
  std::uint64_t compactions = 0;
  std::uint64_t evictions = 0;
};

// Keys are held in two tiers: a mutable trie receiving new sequences and a
// compressed DAG snapshot built at compaction points. Every key maps to a
// slot; evicted slots stay addressable (not live) until the next compaction.
// All operations take an internal lock.
class ResponseCache {
 public:
  explicit ResponseCache(const CacheConfig& cfg = {}) : cfg_(cfg) {}

  std::shared_ptr<const HttpReply> lookup(const ParameterSequence& seq, TimePoint now) {
    std::lock_guard lock(mu_);
    auto slot = slot_of(seq.view());
    if (!slot) return nullptr;
    auto& e = slots_[*slot];
    if (!e.fresh(now)) return nullptr;
    ++e.hit_count;
    e.last_hit = now;
    return e.response;
  }

  // True when lookup() would hit; leaves hit bookkeeping untouched.
  bool holds_fresh(const ParameterSequence& seq, TimePoint now) const {
    std::lock_guard lock(mu_);
    auto slot = slot_of(seq.view());
    return slot && slots_[*slot].fresh(now);
  }

  // Inserts or refreshes. A refresh replaces the bytes and restarts the TTL
  // but keeps hit_count.
  void store(const ParameterSequence& seq, HttpReply response, TimePoint now) {
    std::lock_guard lock(mu_);
    auto slot = slot_of(seq.view());
    if (slot && slots_[*slot].live) {
      auto& e = slots_[*slot];
      e.response = std::make_shared<const HttpReply>(std::move(response));
      e.stored_at = now;
      e.ttl = cfg_.ttl;
      return;
    }
    if (live_ >= cfg_.capacity) evict_least_recently_hit();
    if (!slot) {
      slot = static_cast<std::uint32_t>(slots_.size());
      slots_.emplace_back();
      delta_.insert(seq.view(), *slot);
    }
    auto& e = slots_[*slot];
    e.sequence = seq;
    e.response = std::make_shared<const HttpReply>(std::move(response));
    e.stored_at = now;
    e.last_hit = now;
    e.hit_count = 0;
    e.ttl = cfg_.ttl;
    e.live = true;
    ++live_;
    maybe_compact();
  }

  std::size_t evict_expired(TimePoint now) {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (auto& e : slots_) {
      if (e.live && !e.fresh(now)) {
        drop(e);
        ++n;
      }
    }
    return n;
  }

  std::optional<ResponseCacheEntry> entry(const ParameterSequence& seq) const {
    std::lock_guard lock(mu_);
    auto slot = slot_of(seq.view());
    if (!slot || !slots_[*slot].live) return std::nullopt;
    return slots_[*slot];
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return live_;
  }

  CacheStats stats() const {
    std::lock_guard lock(mu_);
    return {live_, delta_.node_count(), frozen_.node_count(), frozen_.key_count(), compactions_, evictions_};
  }

  const CacheConfig& config() const noexcept { return cfg_; }

 private:
  std::optional<std::uint32_t> slot_of(std::string_view key) const {
    if (const auto* s = delta_.find(key)) return *s;
    if (auto r = frozen_.rank(key)) return frozen_slots_[*r];
    return std::nullopt;
  }

  void drop(ResponseCacheEntry& e) {
    e.live = false;
    e.response.reset();
    --live_;
    ++evictions_;
  }

  void evict_least_recently_hit() {
    ResponseCacheEntry* victim = nullptr;
    for (auto& e : slots_) {
      if (e.live && (victim == nullptr || e.last_hit < victim->last_hit)) victim = &e;
    }
    if (victim != nullptr) drop(*victim);
  }

  // Rebuilds both tiers from live entries once the mutable trie has grown past
  // the threshold or dead slots dominate.
  void maybe_compact() {
    bool delta_big = delta_.node_count() > cfg_.compress_threshold_nodes;
    bool too_many_dead = slots_.size() > 2 * std::max<std::size_t>(cfg_.capacity, 16);
    if (!delta_big && !too_many_dead) return;

    ByteTrie<std::uint32_t> merged;
    std::vector<ResponseCacheEntry> compacted;
    compacted.reserve(live_);
    for (auto& e : slots_) {
      if (!e.live) continue;
      merged.insert(e.sequence.view(), static_cast<std::uint32_t>(compacted.size()));
      compacted.push_back(std::move(e));
    }
    frozen_ = compress(merged);
    frozen_slots_.clear();
    frozen_slots_.reserve(compacted.size());
    merged.for_each([&](std::string_view, std::uint32_t slot) { frozen_slots_.push_back(slot); });
    slots_ = std::move(compacted);
    delta_ = ByteTrie<std::uint32_t>();
    ++compactions_;
  }

  CacheConfig cfg_;
  mutable std::mutex mu_;
  std::vector<ResponseCacheEntry> slots_;
  ByteTrie<std::uint32_t> delta_;
  CompressedDag frozen_;
  std::vector<std::uint32_t> frozen_slots_;  // rank in frozen_ -> slot
  std::size_t live_ = 0;
  std::uint64_t compactions_ = 0;
  std::uint64_t evictions_ = 0;
};

struct DuplicateGroup {
  std::size_t representative = 0;     // index into the batch
  std::vector<std::size_t> duplicates;  // indices into the batch, arrival order
  std::optional<ParameterSequence> sequence;  // empty for non-coalescable requests

  std::size_t size() const noexcept { return 1 + duplicates.size(); }
};

struct CacheHit {
  std::size_t request = 0;  // index into the batch
  std::shared_ptr<const HttpReply> response;
};

struct DedupResult {
  std::uint64_t batch_id = 0;
  std::size_t batch_size = 0;
  std::vector<DuplicateGroup> groups;  // one per representative, arrival order
  std::vector<CacheHit> cache_hits;
  double duplicate_ratio = 0.0;
  TrieStats trie{};

  std::size_t representative_count() const noexcept { return groups.size(); }
};

struct DedupConfig {
  bool cache_enabled = false;
  std::size_t min_group_size = 2;
  std::set<std::string, std::less<>> operation_denylist;  // never coalesced
  CacheConfig cache;
};

class DedupEngine {
 public:
  explicit DedupEngine(DedupConfig cfg = {}) : cfg_(std::move(cfg)), cache_(cfg_.cache) {}

  // Partitions the batch using a fresh trie. Representatives are the first
  // arrival of each sequence; cache hits bypass the trie entirely.
  // consult_cache=false analyzes the batch without touching the cache.
  DedupResult dedup(const WindowBatch<SoapRequest>& batch, TimePoint now, bool consult_cache = true) {
    DedupResult out;
    out.batch_id = batch.batch_id;
    out.batch_size = batch.requests.size();
    ByteTrie<std::uint32_t> trie;
    for (std::size_t i = 0; i < batch.requests.size(); ++i) {
      const SoapRequest& req = batch.requests[i];
      std::optional<ParameterSequence> seq;
      if (!cfg_.operation_denylist.contains(req.operation)) seq = try_build_parameter_sequence(req);
      if (!seq) {
        out.groups.push_back({i, {}, std::nullopt});
        continue;
      }
      if (cfg_.cache_enabled && consult_cache) {
        if (auto hit = cache_.lookup(*seq, now)) {
          out.cache_hits.push_back({i, std::move(hit)});
          continue;
        }
      }
      auto outcome = trie.insert(seq->view(), static_cast<std::uint32_t>(out.groups.size()));
      if (outcome.status == InsertStatus::New) {
        out.groups.push_back({i, {}, std::move(seq)});
      } else {
        out.groups[outcome.payload].duplicates.push_back(i);
      }
    }
    out.trie = trie.stats();
    if (out.batch_size > 0) {
      out.duplicate_ratio = static_cast<double>(out.batch_size - out.groups.size() - out.cache_hits.size()) /
                            static_cast<double>(out.batch_size);
    }
    return out;
  }

  // Group with the most members (ties: earliest representative), provided it
  // reaches min_group_size and is coalescable.
  std::optional<std::size_t> hot_group(const DedupResult& result) const {
    std::optional<std::size_t> best;
    for (std::size_t g = 0; g < result.groups.size(); ++g) {
      const auto& group = result.groups[g];
      if (!group.sequence || group.size() < cfg_.min_group_size) continue;
      if (!best || group.size() > result.groups[*best].size()) best = g;
    }
    return best;
  }

  // `responses[g]` is the reply produced for result.groups[g]. Only a
  // successful (2xx) reply of the hot group is cached.
  void cache_store(const DedupResult& result, const std::vector<HttpReply>& responses, TimePoint now) {
    if (!cfg_.cache_enabled) return;
    auto g = hot_group(result);
    if (!g || *g >= responses.size()) return;
    const HttpReply& reply = responses[*g];
    if (reply.status < 200 || reply.status >= 300) return;
    cache_.store(*result.groups[*g].sequence, reply, now);
  }

  std::size_t evict_expired(TimePoint now) { return cache_.evict_expired(now); }

  ResponseCache& cache() noexcept { return cache_; }
  const ResponseCache& cache() const noexcept { return cache_; }
  const DedupConfig& config() const noexcept { return cfg_; }

 private:
  DedupConfig cfg_;
  ResponseCache cache_;
};

}  // namespace sem
