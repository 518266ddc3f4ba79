#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ptrig/comm_probability.hpp"
#include "ptrig/random.hpp"
#include "ptrig/types.hpp"

namespace ptrig {

enum class Policy { PT, PT_STAR, ET1, ET2 };

std::string_view to_string(Policy policy);
/// Accepts "PT", "PT*", "PT_STAR", "ET1", "ET2" (case-insensitive).
Policy parse_policy(std::string_view name);

/// True for the two predictive policies, which allocate M steps ahead.
inline bool is_predictive(Policy p) {
  return p == Policy::PT || p == Policy::PT_STAR;
}

/// Shared network with K state slots per step. Capacity is
/// η = 4N + 4·n_x·K bytes: every agent may send 4 bytes of scheduling data
/// and K agents may send their state as 4-byte floats.
struct NetworkSpec {
  int N = 0;
  int K = 0;
  int n_x = 0;
  Policy policy = Policy::PT;

  /// Scheduling message size b: 1 byte for PT/PT*, 4 for ET2, 0 for ET1.
  int scheduling_bytes() const;
  double capacity() const { return 4.0 * N + 4.0 * n_x * K; }
  /// Throws ConfigError unless 0 < K < N and n_x > 0.
  void validate() const;
};

struct SlotAllocation {
  long step = 0;
  std::vector<AgentId> granted;  // ascending, unique

  bool contains(AgentId id) const;
};

struct TriggerParams {
  double delta = 0.0;
  double c = 0.0;

  void validate() const;
};

/// Grants the K largest quantized priorities. Equal priorities are ordered
/// by random keys drawn from `rng` in agent-id order, so the result is
/// independent of the input order.
SlotAllocation pt_schedule(std::span<const QuantizedPriority> priorities,
                           int K, RandomStream& rng, long step = 0);

/// Uniformly random K-subset of the N agents.
SlotAllocation et1_schedule(int N, int K, RandomStream& rng, long step = 0);

/// Grants the K largest error norms, ties broken as in pt_schedule. Expects
/// exactly N entries when N is given.
SlotAllocation et2_schedule(std::span<const std::pair<AgentId, double>> norms,
                            int K, RandomStream& rng, long step = 0,
                            std::optional<int> N = std::nullopt);

/// γ_c = γ_s ∧ ‖z‖ ≥ c·δ.
bool trigger_decision(bool granted, double z_norm,
                      const TriggerParams& params);

/// U = (b·N_p + 4·n_x·N_c) / η.
double network_utilization(const NetworkSpec& spec, int n_priority,
                           int n_comm);

/// Allocations decided ahead of time, kept for steps k..k+M.
class AllocationBuffer {
 public:
  explicit AllocationBuffer(int horizon);

  /// Stores an allocation for step `step`, which must lie in
  /// (current, current + horizon] or equal current when horizon is 0.
  void put(SlotAllocation allocation);
  /// Removes and returns the allocation for `step`; empty if none was made.
  SlotAllocation take(long step);
  int horizon() const { return horizon_; }

 private:
  int horizon_;
  std::vector<std::optional<SlotAllocation>> ring_;
};

}  // namespace ptrig
