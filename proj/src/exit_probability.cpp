#include "ptrig/exit_probability.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace ptrig {
namespace {

constexpr int kBatchSize = 1000;
constexpr const char* kTableFormat = "ptrig-exit-table";
constexpr int kTableVersion = 1;

void append_bytes(std::string& buf, const void* p, std::size_t n) {
  buf.append(static_cast<const char*>(p), n);
}

void append_matrix(std::string& buf, const Matrix& m) {
  const std::int64_t r = m.rows(), c = m.cols();
  append_bytes(buf, &r, sizeof r);
  append_bytes(buf, &c, sizeof c);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      append_bytes(buf, &v, sizeof v);
    }
  }
}

// Uniform direction on the unit sphere in R^n (±1 for n = 1).
Vector random_direction(int n, RandomStream& rng) {
  Vector d(n);
  double norm = 0.0;
  do {
    for (int i = 0; i < n; ++i) d[i] = rng.normal();
    norm = d.norm();
  } while (norm == 0.0);
  return d / norm;
}

std::uint64_t parse_hex(const std::string& s) {
  std::uint64_t v = 0;
  std::istringstream is(s);
  is >> std::hex >> v;
  if (is.fail()) throw TableFormatError("bad hex field '" + s + "'");
  return v;
}

}  // namespace

void ErrorProcessSpec::validate() const {
  if (A_cl.rows() == 0 || A_cl.rows() != A_cl.cols()) {
    throw ConfigError("error process: A_cl must be square and non-empty");
  }
  if (sigma_w.rows() != A_cl.rows() || sigma_w.cols() != A_cl.cols()) {
    throw ConfigError("error process: sigma_w must match A_cl");
  }
  if (!A_cl.allFinite() || !sigma_w.allFinite() || !std::isfinite(delta) ||
      !std::isfinite(dt)) {
    throw ConfigError("error process: non-finite entries in spec");
  }
  if (delta <= 0.0) throw ConfigError("error process: delta must be > 0");
  if (dt <= 0.0) throw ConfigError("error process: dt must be > 0");
  AgentModel probe{A_cl, Matrix::Zero(nx(), 1), sigma_w};
  probe.validate();
}

bool ErrorProcessSpec::is_schur_stable() const {
  return spectral_radius(A_cl) < 1.0;
}

std::optional<int> simulate_exit(const ErrorProcessSpec& spec,
                                 const GaussianSampler& noise,
                                 const Vector& z0, int max_steps,
                                 RandomStream& rng) {
  if (z0.norm() >= spec.delta) return 0;
  const double delta_sq = spec.delta * spec.delta;
  Vector z = z0;
  Vector w(z0.size());
  for (int m = 1; m <= max_steps; ++m) {
    noise.sample_into(rng, w);
    z = spec.A_cl * z + w;
    if (z.squaredNorm() >= delta_sq) return m;
  }
  return std::nullopt;
}

std::optional<int> simulate_exit(const ErrorProcessSpec& spec,
                                 const Vector& z0, int max_steps,
                                 RandomStream& rng) {
  return simulate_exit(spec, GaussianSampler(spec.sigma_w), z0, max_steps,
                       rng);
}

std::uint64_t table_fingerprint(const ErrorProcessSpec& spec, int grid_size,
                                int max_steps, int samples,
                                std::uint64_t seed) {
  std::string buf = kTableFormat;
  append_matrix(buf, spec.A_cl);
  append_matrix(buf, spec.sigma_w);
  append_bytes(buf, &spec.delta, sizeof spec.delta);
  append_bytes(buf, &spec.dt, sizeof spec.dt);
  const std::int64_t ints[] = {grid_size, max_steps, samples};
  append_bytes(buf, ints, sizeof ints);
  append_bytes(buf, &seed, sizeof seed);
  return fnv1a(buf);
}

ExitProbTable build_exit_table(const ErrorProcessSpec& spec, int grid_size,
                               int max_steps, int samples, std::uint64_t seed,
                               unsigned threads) {
  spec.validate();
  if (grid_size < 2) throw ConfigError("grid_size must be >= 2");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (samples < 1) throw ConfigError("samples must be >= 1");

  ExitProbTable table;
  table.max_steps = max_steps;
  table.delta = spec.delta;
  table.dt = spec.dt;
  table.samples = samples;
  table.seed = seed;
  table.spec_fingerprint =
      table_fingerprint(spec, grid_size, max_steps, samples, seed);
  table.norm_grid.resize(grid_size);
  for (int g = 0; g < grid_size; ++g) {
    table.norm_grid[g] = g == grid_size - 1
                             ? spec.delta
                             : spec.delta * g / (grid_size - 1);
  }

  const int batches = (samples + kBatchSize - 1) / kBatchSize;
  const int items = grid_size * batches;
  const int cols = max_steps + 1;
  // first_exit[item][m] counts trajectories whose first exit is at step m.
  std::vector<std::int64_t> first_exit(static_cast<std::size_t>(items) * cols,
                                       0);
  const GaussianSampler noise(spec.sigma_w);
  const std::uint64_t tag = stream_tag("exit-table");

  auto work = [&](int item) {
    const int g = item / batches;
    const int b = item % batches;
    const int count = std::min(kBatchSize, samples - b * kBatchSize);
    RandomStream rng(derive_seed(seed, tag, static_cast<std::uint64_t>(item)));
    const double r = table.norm_grid[g];
    std::int64_t* hist = &first_exit[static_cast<std::size_t>(item) * cols];
    for (int s = 0; s < count; ++s) {
      Vector z0 = r == 0.0 ? Vector::Zero(spec.nx())
                           : Vector(r * random_direction(spec.nx(), rng));
      if (g == grid_size - 1) {
        // On the boundary the exit has already happened.
        ++hist[0];
        continue;
      }
      if (auto m = simulate_exit(spec, noise, z0, max_steps, rng)) {
        ++hist[*m];
      }
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(items));
  if (threads <= 1) {
    for (int i = 0; i < items; ++i) work(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int i = next++; i < items; i = next++) work(i);
      });
    }
  }

  table.values.assign(static_cast<std::size_t>(grid_size) * cols, 0.0);
  for (int g = 0; g < grid_size; ++g) {
    std::int64_t cumulative = 0;
    for (int m = 0; m < cols; ++m) {
      for (int b = 0; b < batches; ++b) {
        cumulative +=
            first_exit[static_cast<std::size_t>(g * batches + b) * cols + m];
      }
      table.values[static_cast<std::size_t>(g) * cols + m] =
          static_cast<double>(cumulative) / samples;
    }
  }
  return table;
}

double query_exit_probability(const ExitProbTable& table, double z_norm,
                              int steps) {
  if (steps < 0 || steps > table.max_steps) {
    throw QueryError("steps " + std::to_string(steps) +
                     " outside the tabulated range [0, " +
                     std::to_string(table.max_steps) + "]");
  }
  if (!(z_norm >= 0.0)) {
    throw QueryError("error norm must be a nonnegative number");
  }
  if (z_norm >= table.delta) return 1.0;
  if (steps == 0) return 0.0;

  const auto& grid = table.norm_grid;
  auto hi = std::upper_bound(grid.begin(), grid.end(), z_norm);
  if (hi == grid.end()) return table.at(table.grid_size() - 1, steps);
  const int j = static_cast<int>(hi - grid.begin());
  const int i = j - 1;
  // H jumps to 1 on the boundary, so the last cell holds its inner value.
  if (j == table.grid_size() - 1) return table.at(i, steps);
  const double t = (z_norm - grid[i]) / (grid[j] - grid[i]);
  const double lo_v = table.at(i, steps);
  const double hi_v = table.at(j, steps);
  return lo_v + t * (hi_v - lo_v);
}

std::string fingerprint_hex(std::uint64_t fingerprint) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fingerprint));
  return buf;
}

void write_table(const ExitProbTable& table, std::ostream& out) {
  nlohmann::json payload;
  payload["format"] = kTableFormat;
  payload["version"] = kTableVersion;
  payload["spec_fingerprint"] = fingerprint_hex(table.spec_fingerprint);
  payload["delta"] = table.delta;
  payload["dt"] = table.dt;
  payload["samples"] = table.samples;
  payload["seed"] = table.seed;
  payload["max_steps"] = table.max_steps;
  payload["norm_grid"] = table.norm_grid;
  nlohmann::json rows = nlohmann::json::array();
  for (int g = 0; g < table.grid_size(); ++g) {
    auto first = table.values.begin() + g * (table.max_steps + 1);
    rows.push_back(std::vector<double>(first, first + table.max_steps + 1));
  }
  payload["values"] = std::move(rows);
  const std::string body = payload.dump();
  payload["checksum"] = fingerprint_hex(fnv1a(body));
  out << payload.dump(1) << '\n';
}

ExitProbTable read_table(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw TableFormatError(std::string("table file is not valid: ") +
                           e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", "") != kTableFormat) {
      throw TableFormatError("not an exit-probability table file");
    }
    if (doc.at("version").get<int>() != kTableVersion) {
      throw TableFormatError("unsupported table version");
    }
    const std::string checksum = doc.at("checksum").get<std::string>();
    nlohmann::json payload = doc;
    payload.erase("checksum");
    if (fingerprint_hex(fnv1a(payload.dump())) != checksum) {
      throw TableFormatError("table checksum mismatch (file corrupted?)");
    }
    ExitProbTable t;
    t.spec_fingerprint = parse_hex(payload.at("spec_fingerprint"));
    t.delta = payload.at("delta").get<double>();
    t.dt = payload.at("dt").get<double>();
    t.samples = payload.at("samples").get<int>();
    t.seed = payload.at("seed").get<std::uint64_t>();
    t.max_steps = payload.at("max_steps").get<int>();
    t.norm_grid = payload.at("norm_grid").get<std::vector<double>>();
    for (const auto& row : payload.at("values")) {
      auto r = row.get<std::vector<double>>();
      if (static_cast<int>(r.size()) != t.max_steps + 1) {
        throw TableFormatError("table row has wrong length");
      }
      t.values.insert(t.values.end(), r.begin(), r.end());
    }
    if (t.norm_grid.size() < 2 ||
        t.values.size() != t.norm_grid.size() * (t.max_steps + 1)) {
      throw TableFormatError("table dimensions are inconsistent");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw TableFormatError(std::string("table file is malformed: ") +
                           e.what());
  }
}

void save_table(const ExitProbTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_table(table, out);
  if (!out) throw Error("failed writing table to '" + path + "'");
}

ExitProbTable load_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open table file '" + path + "'");
  return read_table(in);
}

}  // namespace ptrig
