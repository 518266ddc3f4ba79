#include "ptrig/scheduling.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numeric>

namespace ptrig {
namespace {

struct Ranked {
  AgentId id;
  double key;
  std::uint64_t tie;
};

// Top-K by key with random tie-breaking. Tie keys are drawn in ascending id
// order, one per entry, regardless of how the caller ordered its input.
std::vector<AgentId> top_k(std::vector<Ranked> entries, int K,
                           RandomStream& rng) {
  std::sort(entries.begin(), entries.end(),
            [](const Ranked& a, const Ranked& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].id == entries[i - 1].id) {
      throw SchedulerError("duplicate agent id " +
                           std::to_string(entries[i].id));
    }
  }
  for (auto& e : entries) e.tie = rng.next_u64();
  const std::size_t take =
      std::min(entries.size(), static_cast<std::size_t>(std::max(K, 0)));
  std::partial_sort(entries.begin(), entries.begin() + take, entries.end(),
                    [](const Ranked& a, const Ranked& b) {
                      if (a.key != b.key) return a.key > b.key;
                      if (a.tie != b.tie) return a.tie < b.tie;
                      return a.id < b.id;
                    });
  std::vector<AgentId> granted;
  granted.reserve(take);
  for (std::size_t i = 0; i < take; ++i) granted.push_back(entries[i].id);
  std::sort(granted.begin(), granted.end());
  return granted;
}

}  // namespace

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::PT: return "PT";
    case Policy::PT_STAR: return "PT*";
    case Policy::ET1: return "ET1";
    case Policy::ET2: return "ET2";
  }
  return "?";
}

Policy parse_policy(std::string_view name) {
  std::string upper(name);
  for (char& c : upper) c = static_cast<char>(std::toupper(c));
  if (upper == "PT") return Policy::PT;
  if (upper == "PT*" || upper == "PT_STAR" || upper == "PTSTAR") {
    return Policy::PT_STAR;
  }
  if (upper == "ET1") return Policy::ET1;
  if (upper == "ET2") return Policy::ET2;
  throw ConfigError("unknown policy '" + std::string(name) +
                    "' (expected PT, PT*, ET1 or ET2)");
}

int NetworkSpec::scheduling_bytes() const {
  switch (policy) {
    case Policy::PT:
    case Policy::PT_STAR: return 1;
    case Policy::ET1: return 0;
    case Policy::ET2: return 4;
  }
  return 0;
}

void NetworkSpec::validate() const {
  if (N < 1) throw ConfigError("network: N must be >= 1");
  if (K < 1) throw ConfigError("network: K must be >= 1");
  if (K >= N) {
    throw ConfigError("network: K=" + std::to_string(K) +
                      " slots must be fewer than N=" + std::to_string(N) +
                      " agents");
  }
  if (n_x < 1) throw ConfigError("network: n_x must be >= 1");
}

bool SlotAllocation::contains(AgentId id) const {
  return std::binary_search(granted.begin(), granted.end(), id);
}

void TriggerParams::validate() const {
  if (!(delta > 0.0)) throw ConfigError("trigger: delta must be > 0");
  if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("trigger: c must be in [0, 1]");
}

SlotAllocation pt_schedule(std::span<const QuantizedPriority> priorities,
                           int K, RandomStream& rng, long step) {
  std::vector<Ranked> entries;
  entries.reserve(priorities.size());
  for (const auto& p : priorities) {
    entries.push_back({p.agent_id, static_cast<double>(p.value), 0});
  }
  return {step, top_k(std::move(entries), K, rng)};
}

SlotAllocation et1_schedule(int N, int K, RandomStream& rng, long step) {
  if (K >= N) {
    throw ConfigError("ET1: K must be smaller than N");
  }
  std::vector<AgentId> ids(N);
  std::iota(ids.begin(), ids.end(), 0);
  SlotAllocation a{step, {}};
  a.granted.reserve(K);
  std::sample(ids.begin(), ids.end(), std::back_inserter(a.granted), K,
              rng.engine());
  return a;
}

SlotAllocation et2_schedule(std::span<const std::pair<AgentId, double>> norms,
                            int K, RandomStream& rng, long step,
                            std::optional<int> N) {
  if (N && static_cast<int>(norms.size()) != *N) {
    throw SchedulerError("ET2 expects an error norm from every agent");
  }
  std::vector<Ranked> entries;
  entries.reserve(norms.size());
  for (const auto& [id, norm] : norms) {
    if (!std::isfinite(norm)) {
      throw SchedulerError("non-finite error norm from agent " +
                           std::to_string(id));
    }
    entries.push_back({id, norm, 0});
  }
  return {step, top_k(std::move(entries), K, rng)};
}

bool trigger_decision(bool granted, double z_norm,
                      const TriggerParams& params) {
  return granted && z_norm >= params.c * params.delta;
}

double network_utilization(const NetworkSpec& spec, int n_priority,
                           int n_comm) {
  if (n_priority < 0 || n_priority > spec.N) {
    throw AccountingError("N_p=" + std::to_string(n_priority) +
                          " outside [0, N]");
  }
  if (n_comm < 0 || n_comm > spec.K) {
    throw AccountingError("N_c=" + std::to_string(n_comm) + " outside [0, K]");
  }
  return (spec.scheduling_bytes() * static_cast<double>(n_priority) +
          4.0 * spec.n_x * n_comm) /
         spec.capacity();
}

AllocationBuffer::AllocationBuffer(int horizon)
    : horizon_(horizon), ring_(static_cast<std::size_t>(horizon) + 1) {
  if (horizon < 0) throw ConfigError("allocation horizon must be >= 0");
}

void AllocationBuffer::put(SlotAllocation allocation) {
  auto& slot = ring_[static_cast<std::size_t>(allocation.step) % ring_.size()];
  if (slot && slot->step != allocation.step) {
    throw SchedulerError("allocation for step " +
                         std::to_string(slot->step) + " was never consumed");
  }
  slot = std::move(allocation);
}

SlotAllocation AllocationBuffer::take(long step) {
  auto& slot = ring_[static_cast<std::size_t>(step) % ring_.size()];
  if (!slot || slot->step != step) return {step, {}};
  SlotAllocation out = std::move(*slot);
  slot.reset();
  return out;
}

}  // namespace ptrig
