#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ptrig {

/// splitmix64 finalizer; used to derive independent substream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed of the substream identified by (tag, index) under `master`.
/// Distinct (tag, index) pairs give statistically independent streams, so
/// work can be split across threads without changing results.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                          std::uint64_t index = 0);

/// Stable 64-bit FNV-1a hash of a byte string.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Tag constant for derive_seed from a short label.
inline std::uint64_t stream_tag(std::string_view label) { return fnv1a(label); }

/// A seeded pseudo-random stream. One stream per consumer; streams are
/// never shared between threads.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return uniform_(engine_); }
  double normal() { return normal_(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ptrig
