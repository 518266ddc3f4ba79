#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ptrig/model.hpp"
#include "ptrig/random.hpp"
#include "ptrig/types.hpp"

namespace ptrig {

/// The discrete-time estimation-error recursion z⁺ = A_cl z + w,
/// w ~ N(0, sigma_w), observed against the ball D = {‖z‖₂ < delta}.
struct ErrorProcessSpec {
  Matrix A_cl;
  Matrix sigma_w;
  double delta = 0.0;
  double dt = 0.0;

  int nx() const { return static_cast<int>(A_cl.rows()); }
  /// Throws ConfigError on bad dimensions, non-finite entries, or
  /// non-positive delta/dt. Instability is allowed (see is_schur_stable).
  void validate() const;
  bool is_schur_stable() const;
};

/// Offline exit-probability table H(r, m): the probability that the error
/// process started on the sphere ‖z‖ = r leaves D within m steps.
/// Row-major, grid_size() rows by (max_steps + 1) columns.
struct ExitProbTable {
  std::vector<double> norm_grid;
  int max_steps = 0;
  std::vector<double> values;
  double delta = 0.0;
  double dt = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;
  std::uint64_t spec_fingerprint = 0;

  int grid_size() const { return static_cast<int>(norm_grid.size()); }
  double at(int grid_index, int steps) const {
    return values[static_cast<std::size_t>(grid_index) * (max_steps + 1) +
                  steps];
  }
  bool operator==(const ExitProbTable&) const = default;
};

/// First step m in 1..max_steps at which ‖z‖ ≥ delta, 0 when z0 already lies
/// outside D, nullopt when the trajectory stays inside.
std::optional<int> simulate_exit(const ErrorProcessSpec& spec,
                                 const Vector& z0, int max_steps,
                                 RandomStream& rng);

/// Same, with a caller-owned sampler for sigma_w (avoids refactoring the
/// covariance on every call).
std::optional<int> simulate_exit(const ErrorProcessSpec& spec,
                                 const GaussianSampler& noise,
                                 const Vector& z0, int max_steps,
                                 RandomStream& rng);

/// Identifies a table build. Any change in the process, the grid, the
/// sample count or the seed changes the fingerprint.
std::uint64_t table_fingerprint(const ErrorProcessSpec& spec, int grid_size,
                                int max_steps, int samples,
                                std::uint64_t seed);

/// Monte-Carlo tabulation. For each of `grid_size` equispaced norms in
/// [0, delta], `samples` trajectories start uniformly on the sphere of that
/// radius and the cumulative exit fraction is recorded for every step.
/// Work is split into fixed batches with their own substreams, so the
/// result does not depend on `threads` (0 = hardware concurrency).
ExitProbTable build_exit_table(const ErrorProcessSpec& spec, int grid_size,
                               int max_steps, int samples, std::uint64_t seed,
                               unsigned threads = 0);

/// H(z_norm, steps). Exact indicator for steps == 0 or z_norm ≥ delta,
/// linear interpolation along the norm axis otherwise. The cell next to the
/// boundary returns its inner grid value, since H is discontinuous at delta.
double query_exit_probability(const ExitProbTable& table, double z_norm,
                              int steps);

void write_table(const ExitProbTable& table, std::ostream& out);
/// Throws TableFormatError on parse failure or checksum mismatch.
ExitProbTable read_table(std::istream& in);

void save_table(const ExitProbTable& table, const std::string& path);
ExitProbTable load_table(const std::string& path);

std::string fingerprint_hex(std::uint64_t fingerprint);

}  // namespace ptrig
