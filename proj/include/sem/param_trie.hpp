#pragma once

// Byte-alphabet trie used to detect duplicate parameter sequences, plus a
// frozen DAG form obtained by merging identical subtrees.
//
// Nodes live in a contiguous pool and are addressed by 32-bit index. A node
// keeps up to kInlineChildren edges inline and switches to a 256-entry table
// once it branches wider, so lookups cost one step per key byte whatever the
// fan-out.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sem {

struct TrieStats {
  std::size_t key_count = 0;
  std::size_t node_count = 0;
  std::size_t max_depth = 0;

  friend bool operator==(const TrieStats&, const TrieStats&) = default;
};

enum class InsertStatus { New, Duplicate };

template <typename Payload>
struct InsertOutcome {
  InsertStatus status;
  Payload payload;  // fresh value on New, the stored one on Duplicate
};

template <typename Payload = std::uint32_t>
class ByteTrie {
 public:
  using NodeIndex = std::uint32_t;
  static constexpr NodeIndex kNone = 0xFFFFFFFFu;
  static constexpr std::size_t kInlineChildren = 4;

  ByteTrie() { nodes_.emplace_back(); }

  // Walks/creates one node per byte. Returns Duplicate (and creates nothing
  // new at the end node) when the key was already present.
  InsertOutcome<Payload> insert(std::string_view key, Payload value) {
    if (key.empty()) throw std::invalid_argument("ByteTrie::insert: empty key");
    NodeIndex n = 0;
    for (unsigned char b : key) {
      ++visits_;
      NodeIndex next = child(n, b);
      if (next == kNone) next = add_child(n, b);
      n = next;
    }
    Node& end = nodes_[n];
    if (end.is_end) return {InsertStatus::Duplicate, payloads_[end.payload]};
    end.is_end = true;
    end.payload = static_cast<NodeIndex>(payloads_.size());
    payloads_.push_back(value);
    max_depth_ = std::max(max_depth_, key.size());
    return {InsertStatus::New, payloads_.back()};
  }

  bool contains(std::string_view key) const { return find_node(key) != kNone; }

  const Payload* find(std::string_view key) const {
    NodeIndex n = find_node(key);
    return n == kNone ? nullptr : &payloads_[nodes_[n].payload];
  }

  Payload* find(std::string_view key) {
    NodeIndex n = find_node(key);
    return n == kNone ? nullptr : &payloads_[nodes_[n].payload];
  }

  TrieStats stats() const noexcept { return {payloads_.size(), nodes_.size(), max_depth_}; }
  std::size_t size() const noexcept { return payloads_.size(); }
  bool empty() const noexcept { return payloads_.empty(); }

  // Number of non-root nodes stepped into by insert/contains/find so far.
  std::uint64_t visits() const noexcept { return visits_; }
  void reset_visits() noexcept { visits_ = 0; }

  // Visits every stored key in unsigned-byte lexicographic order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    std::string key;
    walk(0, key, fn);
  }

  // Structural access, used by compress() and tests.
  bool is_end(NodeIndex n) const noexcept { return nodes_[n].is_end; }
  bool has_payload(NodeIndex n) const noexcept { return nodes_[n].payload != kNone; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  // Children of n in ascending byte order.
  std::vector<std::pair<std::uint8_t, NodeIndex>> children(NodeIndex n) const {
    std::vector<std::pair<std::uint8_t, NodeIndex>> out;
    const Node& node = nodes_[n];
    if (node.dense != kNone) {
      const auto& table = dense_[node.dense];
      for (std::size_t b = 0; b < 256; ++b) {
        if (table[b] != kNone) out.emplace_back(static_cast<std::uint8_t>(b), table[b]);
      }
    } else {
      for (std::uint8_t i = 0; i < node.count; ++i) out.emplace_back(node.keys[i], node.kids[i]);
      std::sort(out.begin(), out.end());
    }
    return out;
  }

 private:
  struct Node {
    NodeIndex dense = kNone;
    NodeIndex payload = kNone;
    std::array<NodeIndex, kInlineChildren> kids{};
    std::array<std::uint8_t, kInlineChildren> keys{};
    std::uint8_t count = 0;
    bool is_end = false;
  };

  NodeIndex child(NodeIndex n, std::uint8_t b) const noexcept {
    const Node& node = nodes_[n];
    if (node.dense != kNone) return dense_[node.dense][b];
    for (std::uint8_t i = 0; i < node.count; ++i) {
      if (node.keys[i] == b) return node.kids[i];
    }
    return kNone;
  }

  NodeIndex add_child(NodeIndex n, std::uint8_t b) {
    if (nodes_.size() >= kNone) throw std::length_error("ByteTrie: node pool exhausted");
    auto idx = static_cast<NodeIndex>(nodes_.size());
    nodes_.emplace_back();
    Node& node = nodes_[n];
    if (node.dense == kNone && node.count < kInlineChildren) {
      node.keys[node.count] = b;
      node.kids[node.count] = idx;
      ++node.count;
      return idx;
    }
    if (node.dense == kNone) {
      node.dense = static_cast<NodeIndex>(dense_.size());
      auto& table = dense_.emplace_back();
      table.fill(kNone);
      for (std::uint8_t i = 0; i < node.count; ++i) table[node.keys[i]] = node.kids[i];
      node.count = 0;
    }
    dense_[node.dense][b] = idx;
    return idx;
  }

  NodeIndex find_node(std::string_view key) const {
    NodeIndex n = 0;
    for (unsigned char b : key) {
      n = child(n, b);
      if (n == kNone) return kNone;
      ++visits_;
    }
    return nodes_[n].is_end ? n : kNone;
  }

  template <typename Fn>
  void walk(NodeIndex n, std::string& key, Fn& fn) const {
    if (nodes_[n].is_end) fn(std::string_view(key), payloads_[nodes_[n].payload]);
    for (auto [b, c] : children(n)) {
      key.push_back(static_cast<char>(b));
      walk(c, key, fn);
      key.pop_back();
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::array<NodeIndex, 256>> dense_;
  std::vector<Payload> payloads_;
  std::size_t max_depth_ = 0;
  mutable std::uint64_t visits_ = 0;
};

// Read-only acyclic automaton accepting exactly the keys of the trie it was
// built from. Each node records how many keys its subtree accepts, so a key's
// lexicographic rank can be computed during lookup; callers use the rank to
// index per-key data stored outside the graph.
class CompressedDag {
 public:
  using NodeIndex = std::uint32_t;

  struct Node {
    bool is_end = false;
    std::uint64_t words = 0;
    std::vector<std::pair<std::uint8_t, NodeIndex>> edges;  // ascending byte
  };

  CompressedDag() : nodes_(1), root_(0) {}

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t key_count() const noexcept { return nodes_[root_].words; }
  NodeIndex root() const noexcept { return root_; }
  const Node& node(NodeIndex n) const { return nodes_[n]; }

  bool contains(std::string_view key) const { return rank(key).has_value(); }

  // Position of key among all accepted keys in unsigned-byte order.
  std::optional<std::size_t> rank(std::string_view key) const {
    NodeIndex n = root_;
    std::size_t r = 0;
    for (unsigned char b : key) {
      const Node& cur = nodes_[n];
      if (cur.is_end) ++r;
      bool found = false;
      for (auto [eb, c] : cur.edges) {
        if (eb == b) {
          n = c;
          found = true;
          break;
        }
        if (eb > b) break;
        r += nodes_[c].words;
      }
      if (!found) return std::nullopt;
    }
    if (!nodes_[n].is_end) return std::nullopt;
    return r;
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    std::string key;
    walk(root_, key, fn);
  }

  template <typename Payload>
  friend CompressedDag compress(const ByteTrie<Payload>& trie);

 private:
  template <typename Fn>
  void walk(NodeIndex n, std::string& key, Fn& fn) const {
    if (nodes_[n].is_end) fn(std::string_view(key));
    for (auto [b, c] : nodes_[n].edges) {
      key.push_back(static_cast<char>(b));
      walk(c, key, fn);
      key.pop_back();
    }
  }

  std::vector<Node> nodes_;
  NodeIndex root_;
};

// Merges nodes whose subtrees are identical (same end flag, same outgoing
// bytes leading to already-merged children), working bottom-up. The accepted
// language is unchanged and node_count() never grows.
template <typename Payload>
CompressedDag compress(const ByteTrie<Payload>& trie) {
  using TrieIndex = typename ByteTrie<Payload>::NodeIndex;
  CompressedDag dag;
  dag.nodes_.clear();

  std::vector<CompressedDag::NodeIndex> merged(trie.node_count(), 0);
  std::unordered_map<std::string, CompressedDag::NodeIndex> by_signature;
  by_signature.reserve(trie.node_count());

  // Iterative post-order so long keys cannot exhaust the call stack.
  struct Frame {
    TrieIndex node;
    bool expanded;
  };
  std::vector<Frame> stack{{0, false}};
  std::string signature;
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    auto kids = trie.children(f.node);
    if (!f.expanded) {
      stack.push_back({f.node, true});
      for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back({it->second, false});
      continue;
    }
    signature.clear();
    signature.push_back(trie.is_end(f.node) ? '1' : '0');
    CompressedDag::Node candidate;
    candidate.is_end = trie.is_end(f.node);
    candidate.words = candidate.is_end ? 1 : 0;
    for (auto [b, c] : kids) {
      CompressedDag::NodeIndex target = merged[c];
      signature.push_back(static_cast<char>(b));
      signature.append(reinterpret_cast<const char*>(&target), sizeof(target));
      candidate.edges.emplace_back(b, target);
      candidate.words += dag.nodes_[target].words;
    }
    auto [it, inserted] = by_signature.try_emplace(signature, static_cast<CompressedDag::NodeIndex>(dag.nodes_.size()));
    if (inserted) dag.nodes_.push_back(std::move(candidate));
    merged[f.node] = it->second;
  }
  dag.root_ = merged[0];
  return dag;
}

}  // namespace sem
