#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "ptrig/comm_probability.hpp"

using namespace ptrig;
using ptrig::test::handmade_table;
using ptrig::test::scalar_spec;

namespace {

// Grid {0, 0.05, 0.1}, delta 0.1, three steps.
ExitProbTable toy() {
  return handmade_table({0.0, 0.05, 0.1},
                        {{0, 0.1, 0.25, 0.4}, {0, 0.3, 0.5, 0.6}, {1, 1, 1, 1}},
                        0.1);
}

ExitProbTable random_table(std::mt19937_64& g, int max_steps) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int grid = 6;
  std::vector<double> norms(grid);
  std::vector<std::vector<double>> rows(grid);
  for (int i = 0; i < grid; ++i) {
    norms[i] = 0.2 * i / (grid - 1);
    rows[i].push_back(i == grid - 1 ? 1.0 : 0.0);
    double acc = rows[i][0];
    for (int m = 1; m <= max_steps; ++m) {
      acc = i == grid - 1 ? 1.0 : acc + (1.0 - acc) * u(g);
      rows[i].push_back(acc);
    }
  }
  return handmade_table(norms, rows, 0.2);
}

}  // namespace

TEST(ConditionalProbability, WorkedExamples) {
  const auto t = toy();
  // C, not C, C then target 3: restart from the reset one step back.
  const CommSequence p{{true, false, true}};
  EXPECT_EQ(conditional_probability(t, 0.05, p, 3), query_exit_probability(t, 0.0, 1));
  const CommSequence none{{false, false}};
  EXPECT_EQ(conditional_probability(t, 0.05, none, 2), query_exit_probability(t, 0.05, 2));
  EXPECT_EQ(conditional_probability(t, 0.05, CommSequence{}, 0), 0.0);
  const CommSequence early{{true, false}};
  EXPECT_EQ(conditional_probability(t, 0.05, early, 2), query_exit_probability(t, 0.0, 2));
}

TEST(ConditionalProbability, StepRangeIsChecked) {
  EXPECT_THROW(conditional_probability(toy(), 0.0, CommSequence::from_mask(0, 4), 4),
               ConfigError);
  EXPECT_THROW(conditional_probability(toy(), 0.0, CommSequence::from_mask(0, 1), 2),
               ConfigError);
}

TEST(MStepProbability, ZeroHorizonIsIndicator) {
  const HorizonParams p{0, 0.1, 0.0};
  EXPECT_EQ(m_step_probability(toy(), p, 0.1), 1.0);
  EXPECT_EQ(m_step_probability(toy(), p, 0.3), 1.0);
  EXPECT_EQ(m_step_probability(toy(), p, 0.0999), 0.0);
}

TEST(MStepProbability, TwoStepExpansionHasFourTerms) {
  const auto t = toy();
  const double z = 0.03;
  const double Hz1 = query_exit_probability(t, z, 1);
  const double Hz2 = query_exit_probability(t, z, 2);
  const double H01 = query_exit_probability(t, 0.0, 1);
  const double H02 = query_exit_probability(t, 0.0, 2);
  // The current step is inside D, so the C_t branch carries zero weight.
  const double Ct = 0.0;
  const double expect = (1 - Ct) * (1 - Hz1) * Hz2   // C̄_t, C̄_{t+1}
                        + (1 - Ct) * Hz1 * H01       // C̄_t, C_{t+1}
                        + Ct * (1 - H01) * H02       // C_t, C̄_{t+1}
                        + Ct * H01 * H01;            // C_t, C_{t+1}
  EXPECT_NEAR(m_step_probability(t, {2, 0.1, 0.0}, z), expect, 1e-15);
}

TEST(MStepProbability, OutsideDomainReportsOne) {
  EXPECT_EQ(m_step_probability(toy(), {2, 0.1, 0.0}, 0.1), 1.0);
  EXPECT_EQ(m_step_probability(toy(), {3, 0.1, 0.0}, 5.0), 1.0);
}

TEST(MStepProbability, HorizonBeyondTableIsConfigError) {
  EXPECT_THROW(m_step_probability(toy(), {4, 0.1, 0.0}, 0.0), ConfigError);
  EXPECT_THROW((HorizonParams{11, 0.1, 0.0}.validate()), ConfigError);
  EXPECT_THROW((HorizonParams{2, 0.1, 1.0}.validate()), ConfigError);
  const auto t = toy();
  EXPECT_THROW((HorizonParams{4, 0.1, 0.0}.validate(&t)), ConfigError);
}

TEST(MStepProbability, ZeroNoiseGivesZeroInside) {
  const auto t = build_exit_table(scalar_spec(0.9, 0.0, 0.05), 11, 4, 50, 1);
  for (int M = 1; M <= 4; ++M) {
    for (double z : {0.0, 0.01, 0.03, 0.0499}) {
      EXPECT_EQ(m_step_probability(t, {M, 0.05, 0.0}, z), 0.0) << M << " " << z;
    }
  }
}

TEST(MStepProbability, MonotoneInNormForScalarProcess) {
  const auto t = build_exit_table(scalar_spec(0.9, 4e-4, 0.05), 26, 3, 10000, 2);
  for (int M = 1; M <= 3; ++M) {
    double prev = 0.0;
    for (int i = 0; i <= 100; ++i) {
      const double p = m_step_probability(t, {M, 0.05, 0.0}, 0.05 * i / 100);
      EXPECT_GE(p, prev - 0.03);
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
      prev = std::max(prev, p);
    }
  }
}

TEST(SequenceWeights, SumToOneOnRandomTables) {
  std::mt19937_64 g(99);
  std::uniform_real_distribution<double> z(0.0, 0.25);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_table(g, 3);
    for (int M = 1; M <= 3; ++M) {
      const auto w = sequence_weights(t, M, z(g));
      ASSERT_EQ(w.size(), 1u << M);
      EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-9);
    }
  }
}

TEST(SequenceWeights, MatchConditionalProducts) {
  const auto t = toy();
  const double z = 0.07;
  const auto w = sequence_weights(t, 3, z);
  for (std::uint32_t mask = 0; mask < 8; ++mask) {
    const auto seq = CommSequence::from_mask(mask, 3);
    double expect = 1.0;
    for (int m = 0; m < 3; ++m) {
      CommSequence prefix{std::vector<bool>(seq.outcomes.begin(), seq.outcomes.begin() + m)};
      const double p = conditional_probability(t, z, prefix, m);
      expect *= seq.outcomes[m] ? p : 1.0 - p;
    }
    EXPECT_NEAR(w[mask], expect, 1e-15) << mask;
  }
}

TEST(Quantize, Examples) {
  EXPECT_EQ(quantize(0.48173), 48);
  EXPECT_EQ(quantize(0.0), 0);
  EXPECT_EQ(quantize(1.0), 100);
  EXPECT_EQ(quantize(0.999), 99);
  EXPECT_EQ(quantize(0.29), 29);
  EXPECT_THROW(quantize(1.0001), InternalError);
  EXPECT_THROW(quantize(-1e-12), InternalError);
  EXPECT_THROW(quantize(std::nan("")), InternalError);
}

TEST(Quantize, RoundTripErrorBelowOnePercent) {
  for (int i = 0; i <= 10000; ++i) {
    const double p = i / 10000.0;
    EXPECT_LT(std::abs(dequantize(quantize(p)) - p), 0.01);
  }
}

TEST(ShouldSend, Examples) {
  EXPECT_TRUE(should_send(0.5, {2, 0.1, 0.2}));
  EXPECT_FALSE(should_send(0.2, {2, 0.1, 0.2}));
  EXPECT_TRUE(should_send(0.1, {2, 0.1, 0.0}));
  EXPECT_TRUE(should_send(0.0, {2, 0.1, 0.0}));
}
