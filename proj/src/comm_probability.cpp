#include "ptrig/comm_probability.hpp"

#include <algorithm>
#include <cmath>

namespace ptrig {
namespace {

// Table lookups needed by one evaluation: H(z, m) and H(0, d).
struct Lookups {
  std::vector<double> from_current;  // index m = 0..M
  std::vector<double> from_reset;    // index d = 0..M

  Lookups(const ExitProbTable& table, int M, double z_norm)
      : from_current(M + 1), from_reset(M + 1) {
    for (int m = 0; m <= M; ++m) {
      from_current[m] = query_exit_probability(table, z_norm, m);
      from_reset[m] = query_exit_probability(table, 0.0, m);
    }
  }

  // Conditional for offset m given the outcome bits below m.
  double conditional(std::uint32_t mask, int m) const {
    const std::uint32_t below = m >= 32 ? mask : mask & ((1u << m) - 1u);
    if (below == 0) return from_current[m];
    const int latest = 31 - __builtin_clz(below);
    return from_reset[m - latest];
  }
};

void check_horizon(const ExitProbTable& table, int M) {
  if (M < 0 || M > kMaxHorizon) {
    throw ConfigError("horizon M must be in [0, " +
                      std::to_string(kMaxHorizon) + "]");
  }
  if (M > table.max_steps) {
    throw ConfigError("horizon M=" + std::to_string(M) +
                      " exceeds the table's max_steps=" +
                      std::to_string(table.max_steps));
  }
}

}  // namespace

void HorizonParams::validate(const ExitProbTable* table) const {
  if (M < 0 || M > kMaxHorizon) {
    throw ConfigError("horizon M must be in [0, " +
                      std::to_string(kMaxHorizon) + "]");
  }
  if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
  if (!(p_lower >= 0.0 && p_lower < 1.0)) {
    throw ConfigError("p_lower must be in [0, 1)");
  }
  if (table != nullptr) check_horizon(*table, M);
}

CommSequence CommSequence::from_mask(std::uint32_t mask, int length) {
  CommSequence s;
  s.outcomes.resize(length);
  for (int m = 0; m < length; ++m) s.outcomes[m] = (mask >> m) & 1u;
  return s;
}

double conditional_probability(const ExitProbTable& table, double z_norm,
                               const CommSequence& prefix,
                               int target_offset) {
  if (target_offset < 0 || target_offset > table.max_steps) {
    throw ConfigError("target offset " + std::to_string(target_offset) +
                      " exceeds the table's step range");
  }
  if (prefix.size() != target_offset) {
    throw ConfigError("prefix length must equal the target offset");
  }
  for (int j = target_offset - 1; j >= 0; --j) {
    if (prefix.outcomes[j]) {
      return query_exit_probability(table, 0.0, target_offset - j);
    }
  }
  return query_exit_probability(table, z_norm, target_offset);
}

std::vector<double> sequence_weights(const ExitProbTable& table, int M,
                                     double z_norm) {
  check_horizon(table, M);
  const Lookups h(table, M, z_norm);
  const std::uint32_t count = 1u << M;
  std::vector<double> weights(count);
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    double w = 1.0;
    for (int m = 0; m < M; ++m) {
      const double p = h.conditional(mask, m);
      w *= (mask >> m) & 1u ? p : 1.0 - p;
    }
    weights[mask] = w;
  }
  return weights;
}

double chain_expansion(const ExitProbTable& table, int M, double z_norm) {
  check_horizon(table, M);
  const Lookups h(table, M, z_norm);
  const auto weights = sequence_weights(table, M, z_norm);
  double total = 0.0;
  for (std::uint32_t mask = 0; mask < weights.size(); ++mask) {
    total += weights[mask] * h.conditional(mask, M);
  }
  return std::clamp(total, 0.0, 1.0);
}

double m_step_probability(const ExitProbTable& table,
                          const HorizonParams& params, double z_norm) {
  check_horizon(table, params.M);
  if (!(z_norm >= 0.0)) throw QueryError("error norm must be nonnegative");
  if (z_norm >= table.delta) return 1.0;
  return chain_expansion(table, params.M, z_norm);
}

int quantize(double probability) {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw InternalError("probability outside [0, 1] reached quantize");
  }
  // The 1e-9 slack keeps decimal inputs such as 0.29 (100·0.29 =
  // 28.999999999999996) on their intended integer.
  return std::min(100, static_cast<int>(std::floor(100.0 * probability + 1e-9)));
}

bool should_send(double probability, const HorizonParams& params) {
  if (params.p_lower == 0.0) return true;
  return probability > params.p_lower;
}

}  // namespace ptrig
