#pragma once

#include <cstdint>
#include <vector>

#include "ptrig/exit_probability.hpp"
#include "ptrig/types.hpp"

namespace ptrig {

/// Largest horizon accepted by config validation (2^M enumerations).
inline constexpr int kMaxHorizon = 10;

struct HorizonParams {
  int M = 0;
  double delta = 0.0;
  /// Lower bound on the probability an agent bothers to send; 0 sends
  /// unconditionally.
  double p_lower = 0.0;

  /// Throws ConfigError unless 0 ≤ M ≤ kMaxHorizon, delta > 0,
  /// 0 ≤ p_lower < 1 and (if given) the table covers M steps.
  void validate(const ExitProbTable* table = nullptr) const;
};

/// Outcomes of the communication events at offsets 0..M-1 of the horizon.
struct CommSequence {
  std::vector<bool> outcomes;

  static CommSequence from_mask(std::uint32_t mask, int length);
  int size() const { return static_cast<int>(outcomes.size()); }
};

/// One-byte scheduling payload.
struct QuantizedPriority {
  AgentId agent_id = 0;
  int value = 0;
};

/// P(C at offset m | outcomes at offsets 0..m-1), approximated by a table
/// lookup: after the latest positive outcome j the error restarts from zero,
/// giving H(0, m - j); without one it is H(z_norm, m). `prefix` must have
/// length `target_offset`.
double conditional_probability(const ExitProbTable& table, double z_norm,
                               const CommSequence& prefix, int target_offset);

/// Probability weight of each of the 2^M outcome sequences (index = bit mask,
/// bit m = outcome at offset m), each the product of its conditionals and
/// complements. The weights sum to one.
std::vector<double> sequence_weights(const ExitProbTable& table, int M,
                                     double z_norm);

/// The plain chain-rule expansion: Σ over sequences of weight times the
/// conditional probability of communicating at offset M. The current event
/// is the indicator ‖z‖ ≥ delta, so an agent outside D is treated as
/// resetting now.
double chain_expansion(const ExitProbTable& table, int M, double z_norm);

/// M-step communication probability used as the scheduling priority.
/// Inside D this is chain_expansion. An agent already outside D has an
/// outstanding demand that only a granted slot can clear, so it reports 1.
double m_step_probability(const ExitProbTable& table,
                          const HorizonParams& params, double z_norm);

/// floor(100·P). Throws InternalError outside [0, 1].
int quantize(double probability);

inline double dequantize(int value) { return value / 100.0; }

/// Remark-1 filter: send iff P > p_lower. With p_lower = 0 every agent
/// sends.
bool should_send(double probability, const HorizonParams& params);

}  // namespace ptrig
