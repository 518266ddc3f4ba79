#pragma once

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptrig/comm_probability.hpp"
#include "ptrig/exit_probability.hpp"
#include "ptrig/scenarios.hpp"
#include "ptrig/scheduling.hpp"

namespace ptrig {

struct TableParams {
  int grid_size = 51;
  /// 0 selects max(M, 1).
  int max_steps = 0;
  int samples = 10000;
  std::uint64_t seed = 1;
};

/// Overrides the error process the exit table is built from.
struct ErrorProcessOverride {
  std::optional<Matrix> A_cl;
  std::optional<Matrix> sigma_w;
};

struct RunConfig {
  ScenarioKind scenario = ScenarioKind::CartPoleSync;
  int N = 10;
  CaccParams cacc;
  CartPoleParams cartpole;
  Policy policy = Policy::PT;
  /// Policies compared by a sweep whose axis is not the policy.
  std::vector<Policy> policies{Policy::PT};
  int K = 4;
  int M = 2;
  double c = 0.5;
  /// Lower bound used by PT*. Plain PT ignores it.
  double p_lower = 0.2;
  double duration = 30.0;
  std::uint64_t seed = 1;
  double divergence_bound = 1e6;
  TableParams table;
  ErrorProcessOverride error_process;

  double dt() const;
  double delta() const;
  int nx() const;
  /// 𝒯 = T/Δt.
  long steps() const;
  NetworkSpec network() const;
  TriggerParams trigger() const;
  /// HorizonParams of the configured policy (p_lower is 0 unless PT*).
  HorizonParams horizon() const;
  int table_steps() const {
    return table.max_steps > 0 ? table.max_steps : std::max(M, 1);
  }
  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

/// Builds the fleet of the configured scenario.
Fleet build_fleet(const RunConfig& config);

/// Error process the run's exit table must be built from.
ErrorProcessSpec table_spec(const RunConfig& config);
std::uint64_t expected_table_fingerprint(const RunConfig& config);
ExitProbTable build_table_for(const RunConfig& config, unsigned threads = 0);

/// Decides slot allocations from the agents' current error norms.
class Allocator {
 public:
  virtual ~Allocator() = default;
  /// Steps between the decision and the step the slots belong to.
  virtual int lead() const = 0;
  struct Result {
    SlotAllocation allocation;
    /// Agents that sent scheduling data this step.
    int n_priority = 0;
  };
  virtual Result allocate(long step, std::span<const double> z_norms,
                          RandomStream& rng) = 0;
};

/// PT and PT*: every agent (PT*: every agent above p_lower) reports its
/// quantized M-step probability; the K largest get step k+M.
class PredictiveAllocator final : public Allocator {
 public:
  PredictiveAllocator(std::shared_ptr<const ExitProbTable> table,
                      HorizonParams horizon, int K);
  int lead() const override { return horizon_.M; }
  Result allocate(long step, std::span<const double> z_norms,
                  RandomStream& rng) override;

 private:
  std::shared_ptr<const ExitProbTable> table_;
  HorizonParams horizon_;
  int K_;
  std::vector<QuantizedPriority> buffer_;
};

class RandomAllocator final : public Allocator {
 public:
  RandomAllocator(int N, int K) : N_(N), K_(K) {}
  int lead() const override { return 0; }
  Result allocate(long step, std::span<const double> z_norms,
                  RandomStream& rng) override;

 private:
  int N_;
  int K_;
};

class ErrorPriorityAllocator final : public Allocator {
 public:
  explicit ErrorPriorityAllocator(int K) : K_(K) {}
  int lead() const override { return 0; }
  Result allocate(long step, std::span<const double> z_norms,
                  RandomStream& rng) override;

 private:
  int K_;
  std::vector<std::pair<AgentId, double>> buffer_;
};

std::unique_ptr<Allocator> make_allocator(
    const RunConfig& config, std::shared_ptr<const ExitProbTable> table);

struct RunRecord {
  std::string scenario;
  Policy policy = Policy::PT;
  int N = 0;
  int K = 0;
  int M = 0;
  int n_x = 0;
  double dt = 0.0;
  /// Planned number of steps 𝒯. A diverged run records fewer.
  long planned_steps = 0;

  std::vector<double> utilization;  // U_k
  std::vector<int> n_priority;      // N_p
  std::vector<int> n_comm;          // N_c
  /// Step-major, N entries per step.
  std::vector<double> eps_norm;
  std::vector<double> z_norm;
  std::vector<std::uint8_t> granted;
  std::vector<std::uint8_t> triggered;

  double E_bar = 0.0;
  double U_bar = 0.0;
  bool metrics_defined = false;
  bool diverged = false;
  long divergence_step = -1;

  std::uint64_t config_fingerprint = 0;
  std::uint64_t table_fingerprint = 0;
  std::uint64_t seed = 0;

  long recorded_steps() const {
    return static_cast<long>(utilization.size());
  }
};

struct Summary {
  double E_bar = 0.0;
  double U_bar = 0.0;
  bool defined = false;
};

/// Ē and Ū from the per-step arrays; summed step-outer, agent-inner.
Summary compute_summary(const RunRecord& record);

/// Module failure during a run, tagged with the step it happened at.
class RunError : public Error {
 public:
  RunError(long step, const std::string& message)
      : Error("step " + std::to_string(step) + ": " + message), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// One closed-loop run, advanced a step at a time.
class Simulation {
 public:
  /// `table` may be null for the ET policies. A table whose fingerprint
  /// does not match the config is rejected unless `allow_mismatch`.
  Simulation(const RunConfig& config,
             std::shared_ptr<const ExitProbTable> table,
             bool allow_mismatch = false);
  /// Uses `allocator` in place of the configured policy's.
  Simulation(const RunConfig& config,
             std::shared_ptr<const ExitProbTable> table,
             std::unique_ptr<Allocator> allocator,
             bool allow_mismatch = false);

  /// Executes step k. Throws RunError when a module fails.
  void step();
  bool finished() const;
  long k() const { return k_; }

  std::span<const Vector> states() const { return x_; }
  std::span<const Vector> predictions() const { return x_hat_; }
  const Fleet& fleet() const { return fleet_; }
  const RunRecord& record() const { return record_; }

  /// Runs the remaining steps and returns the record with its summary.
  RunRecord finish();

 private:
  void advance(long k);

  RunConfig config_;
  Fleet fleet_;
  std::shared_ptr<const ExitProbTable> table_;
  std::unique_ptr<Allocator> allocator_;
  AllocationBuffer buffer_;
  NetworkSpec network_;
  TriggerParams trigger_;
  RandomStream schedule_rng_;
  std::vector<RandomStream> noise_rng_;
  std::vector<GaussianSampler> noise_;
  std::vector<Vector> x_;
  std::vector<Vector> x_hat_;
  std::vector<Vector> u_;
  std::vector<Vector> w_;
  std::vector<double> z_;
  std::vector<double> eps_;
  long k_ = 0;
  long steps_ = 0;
  bool stopped_ = false;
  RunRecord record_;
};

RunRecord run(const RunConfig& config,
              std::shared_ptr<const ExitProbTable> table,
              bool allow_mismatch = false);

enum class SweepAxis { N, K, Policy };

std::string_view to_string(SweepAxis axis);
SweepAxis parse_axis(std::string_view name);

struct SweepEntry {
  std::string value;
  Policy policy = Policy::PT;
  std::uint64_t seed = 0;
  std::optional<RunRecord> record;
  std::string error;
};

struct SweepOptions {
  /// Parallel runs; 0 = hardware concurrency.
  unsigned jobs = 0;
  bool allow_mismatch = false;
};

/// The config of the run at `value` on `axis`. Axis N and K derive the
/// seed from the master seed and the value; the policy axis keeps it.
RunConfig sweep_point(const RunConfig& base, SweepAxis axis,
                      const std::string& value);

/// Runs every value (times every policy in base.policies unless the axis is
/// the policy). Failed runs carry their message. When `table` is null,
/// tables are built once per distinct fingerprint.
std::vector<SweepEntry> sweep(const RunConfig& base, SweepAxis axis,
                              const std::vector<std::string>& values,
                              std::shared_ptr<const ExitProbTable> table,
                              const SweepOptions& options = {});

void write_run_csv(const RunRecord& record, std::ostream& out);
std::string run_summary_json(const RunRecord& record);
void write_sweep_csv(const RunConfig& base, SweepAxis axis,
                     const std::vector<SweepEntry>& entries,
                     std::ostream& out);

/// %.17g, or "nan".
std::string format_double(double value);

}  // namespace ptrig
