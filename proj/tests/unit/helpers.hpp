#pragma once

#include <vector>

#include "ptrig/exit_probability.hpp"
#include "ptrig/simulation.hpp"

namespace ptrig::test {

inline ErrorProcessSpec scalar_spec(double a, double variance, double delta,
                                    double dt = 0.01) {
  return {Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, variance), delta,
          dt};
}

/// Table with the given grid and rows written directly (no sampling).
inline ExitProbTable handmade_table(std::vector<double> grid,
                                    std::vector<std::vector<double>> rows,
                                    double delta) {
  ExitProbTable t;
  t.norm_grid = std::move(grid);
  t.max_steps = static_cast<int>(rows.front().size()) - 1;
  t.delta = delta;
  t.dt = 0.01;
  t.samples = 1;
  for (const auto& row : rows) t.values.insert(t.values.end(), row.begin(), row.end());
  return t;
}

/// A short all-simulated synchronization run with a cheap table.
inline RunConfig small_sync(Policy policy = Policy::PT) {
  RunConfig c;
  c.scenario = ScenarioKind::CartPoleSync;
  c.N = 5;
  c.K = 2;
  c.M = 2;
  c.policy = policy;
  c.policies = {Policy::PT, Policy::PT_STAR, Policy::ET1, Policy::ET2};
  c.duration = 2.0;
  c.cartpole.physical_agent = false;
  c.table.grid_size = 11;
  c.table.samples = 400;
  return c;
}

}  // namespace ptrig::test
