#pragma once

// Adaptive on/off switch for coalescing. Tracks an exponentially weighted
// average of the per-window duplicate ratio and of the per-request analysis
// cost, and applies hysteresis between an enter and an exit threshold.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>

#include "sem/types.hpp"

namespace sem {

enum class GateMode { Sem, Passthrough };

inline const char* to_string(GateMode m) noexcept { return m == GateMode::Sem ? "sem" : "passthrough"; }

struct GateConfig {
  double enter = 0.35;
  double exit = 0.20;
  double alpha = 0.3;
  std::size_t window = 32;           // observations kept for the average
  double overhead_budget_pct = 20.0;  // of mean backend service time
};

struct GateObservation {
  std::uint64_t batch_id = 0;
  double duplicate_ratio = 0.0;
  Nanos analysis_cost{0};
  std::size_t batch_size = 0;
};

struct GateDecision {
  GateMode mode = GateMode::Sem;
  std::string reason;
  std::uint64_t effective_from = 0;
};

class Gate {
 public:
  explicit Gate(const GateConfig& cfg = {}) : cfg_(cfg) {
    if (cfg_.alpha <= 0.0 || cfg_.alpha > 1.0) throw std::invalid_argument("gate alpha must be in (0,1]");
    if (cfg_.exit > cfg_.enter) throw std::invalid_argument("gate exit threshold above enter threshold");
    if (cfg_.window == 0) throw std::invalid_argument("gate window must be positive");
  }

  void observe(const GateObservation& obs) {
    push(ratios_, obs.duplicate_ratio);
    double per_request = obs.batch_size == 0 ? 0.0
                                             : static_cast<double>(obs.analysis_cost.count()) /
                                                   static_cast<double>(obs.batch_size);
    push(costs_, per_request);
    last_batch_ = obs.batch_id;
    ++observations_;
  }

  void observe_backend_service(Nanos service) {
    double ns = static_cast<double>(service.count());
    backend_ns_ = backend_ns_ ? cfg_.alpha * ns + (1.0 - cfg_.alpha) * *backend_ns_ : ns;
  }

  GateDecision decide() {
    GateDecision d;
    d.effective_from = observations_ == 0 ? 0 : last_batch_ + 1;
    if (observations_ == 0) {
      d.mode = mode_;
      d.reason = "no observations";
      return d;
    }
    double ratio = ewma_ratio();
    double cost = ewma_cost_ns();
    if (backend_ns_ && cost > *backend_ns_ * cfg_.overhead_budget_pct / 100.0) {
      mode_ = GateMode::Passthrough;
      d.reason = "analysis cost over budget";
    } else if (ratio >= cfg_.enter) {
      mode_ = GateMode::Sem;
      d.reason = "duplicate ratio at or above enter threshold";
    } else if (ratio <= cfg_.exit) {
      mode_ = GateMode::Passthrough;
      d.reason = "duplicate ratio at or below exit threshold";
    } else {
      d.reason = "inside hysteresis band";
    }
    d.mode = mode_;
    return d;
  }

  GateMode mode() const noexcept { return mode_; }
  double ewma_ratio() const noexcept { return ewma(ratios_); }
  double ewma_cost_ns() const noexcept { return ewma(costs_); }
  std::optional<double> backend_service_ns() const noexcept { return backend_ns_; }
  const GateConfig& config() const noexcept { return cfg_; }

 private:
  void push(std::deque<double>& q, double v) {
    q.push_back(v);
    if (q.size() > cfg_.window) q.pop_front();
  }

  // Seeded with the oldest retained observation.
  double ewma(const std::deque<double>& q) const noexcept {
    if (q.empty()) return 0.0;
    double e = q.front();
    for (std::size_t i = 1; i < q.size(); ++i) e = cfg_.alpha * q[i] + (1.0 - cfg_.alpha) * e;
    return e;
  }

  GateConfig cfg_;
  std::deque<double> ratios_;
  std::deque<double> costs_;
  std::optional<double> backend_ns_;
  std::uint64_t last_batch_ = 0;
  std::uint64_t observations_ = 0;
  GateMode mode_ = GateMode::Sem;
};

}  // namespace sem
