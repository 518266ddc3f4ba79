#include "ptrig/simulation.hpp"

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ptrig/config.hpp"

namespace ptrig {

double RunConfig::dt() const {
  return scenario == ScenarioKind::Cacc ? cacc.dt : cartpole.dt;
}

double RunConfig::delta() const {
  return scenario == ScenarioKind::Cacc ? cacc.delta : cartpole.delta;
}

int RunConfig::nx() const {
  return scenario == ScenarioKind::Cacc ? 4
                                        : static_cast<int>(cartpole.A.rows());
}

long RunConfig::steps() const { return std::lround(duration / dt()); }

NetworkSpec RunConfig::network() const { return {N, K, nx(), policy}; }

TriggerParams RunConfig::trigger() const { return {delta(), c}; }

HorizonParams RunConfig::horizon() const {
  return {M, delta(), policy == Policy::PT_STAR ? p_lower : 0.0};
}

void RunConfig::validate() const {
  if (scenario == ScenarioKind::Cacc) {
    cacc.validate();
  } else {
    cartpole.validate();
  }
  network().validate();
  trigger().validate();
  if (M < 0 || M > kMaxHorizon) {
    throw ConfigError("M must be in [0, " + std::to_string(kMaxHorizon) + "]");
  }
  if (!(p_lower >= 0.0 && p_lower < 1.0)) {
    throw ConfigError("p_lower must be in [0, 1)");
  }
  if (!(duration >= 0.0) || !std::isfinite(duration)) {
    throw ConfigError("duration must be a finite number >= 0");
  }
  const double ratio = duration / dt();
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError("duration must be a whole number of time steps");
  }
  if (!(divergence_bound > 0.0)) {
    throw ConfigError("divergence_bound must be > 0");
  }
  if (policies.empty()) throw ConfigError("policies must not be empty");
  if (table.grid_size < 2) throw ConfigError("table.grid_size must be >= 2");
  if (table.samples < 1) throw ConfigError("table.samples must be >= 1");
  if (table.max_steps < 0) throw ConfigError("table.max_steps must be >= 0");
  if (table_steps() < M) {
    throw ConfigError("table.max_steps must cover the horizon M=" +
                      std::to_string(M));
  }
  if (scenario == ScenarioKind::Cacc && N % cacc.lanes != 0) {
    throw ConfigError("N=" + std::to_string(N) + " is not divisible by " +
                      std::to_string(cacc.lanes) + " lanes");
  }
  const int n = nx();
  for (const auto* m : {&error_process.A_cl, &error_process.sigma_w}) {
    if (*m && ((*m)->rows() != n || (*m)->cols() != n)) {
      throw ConfigError("error_process matrices must be " +
                        std::to_string(n) + "x" + std::to_string(n));
    }
  }
  table_spec(*this).validate();
}

Fleet build_fleet(const RunConfig& config) {
  switch (config.scenario) {
    case ScenarioKind::Cacc:
      return build_cacc_fleet(config.cacc, config.N);
    case ScenarioKind::CartPoleSync:
      return build_cartpole_fleet(config.cartpole, config.N,
                                  CartPoleMode::Sync, config.seed,
                                  config.duration);
    case ScenarioKind::CartPoleStabilize:
      return build_cartpole_fleet(config.cartpole, config.N,
                                  CartPoleMode::Stabilize, config.seed,
                                  config.duration);
  }
  throw InternalError("unknown scenario");
}

ErrorProcessSpec table_spec(const RunConfig& config) {
  ErrorProcessSpec spec;
  const int n = config.nx();
  if (config.scenario == ScenarioKind::Cacc) {
    const auto [Ac, Bc] = cacc_continuous_model(config.cacc);
    spec.A_cl = discretize_zoh(Ac, Bc, config.cacc.dt).first;
    spec.sigma_w = Matrix::Identity(n, n) * config.cacc.sigma_w;
  } else {
    spec.A_cl = config.cartpole.A;
    spec.sigma_w = Matrix::Identity(n, n) * config.cartpole.sigma_w;
  }
  if (config.error_process.A_cl) spec.A_cl = *config.error_process.A_cl;
  if (config.error_process.sigma_w) spec.sigma_w = *config.error_process.sigma_w;
  spec.delta = config.delta();
  spec.dt = config.dt();
  return spec;
}

std::uint64_t expected_table_fingerprint(const RunConfig& config) {
  return table_fingerprint(table_spec(config), config.table.grid_size,
                           config.table_steps(), config.table.samples,
                           config.table.seed);
}

ExitProbTable build_table_for(const RunConfig& config, unsigned threads) {
  return build_exit_table(table_spec(config), config.table.grid_size,
                          config.table_steps(), config.table.samples,
                          config.table.seed, threads);
}

PredictiveAllocator::PredictiveAllocator(
    std::shared_ptr<const ExitProbTable> table, HorizonParams horizon, int K)
    : table_(std::move(table)), horizon_(horizon), K_(K) {
  if (!table_) {
    throw ConfigError(
        "predictive triggering needs an exit-probability table (run "
        "build-table first)");
  }
  horizon_.validate(table_.get());
}

Allocator::Result PredictiveAllocator::allocate(
    long step, std::span<const double> z_norms, RandomStream& rng) {
  buffer_.clear();
  for (std::size_t i = 0; i < z_norms.size(); ++i) {
    const double p = m_step_probability(*table_, horizon_, z_norms[i]);
    if (should_send(p, horizon_)) {
      buffer_.push_back({static_cast<AgentId>(i), quantize(p)});
    }
  }
  Result r;
  r.n_priority = static_cast<int>(buffer_.size());
  r.allocation = pt_schedule(buffer_, K_, rng, step + horizon_.M);
  return r;
}

Allocator::Result RandomAllocator::allocate(long step,
                                            std::span<const double>,
                                            RandomStream& rng) {
  return {et1_schedule(N_, K_, rng, step), 0};
}

Allocator::Result ErrorPriorityAllocator::allocate(
    long step, std::span<const double> z_norms, RandomStream& rng) {
  buffer_.clear();
  for (std::size_t i = 0; i < z_norms.size(); ++i) {
    buffer_.emplace_back(static_cast<AgentId>(i), z_norms[i]);
  }
  const int n = static_cast<int>(z_norms.size());
  return {et2_schedule(buffer_, K_, rng, step, n), n};
}

std::unique_ptr<Allocator> make_allocator(
    const RunConfig& config, std::shared_ptr<const ExitProbTable> table) {
  switch (config.policy) {
    case Policy::PT:
    case Policy::PT_STAR:
      return std::make_unique<PredictiveAllocator>(std::move(table),
                                                   config.horizon(), config.K);
    case Policy::ET1:
      return std::make_unique<RandomAllocator>(config.N, config.K);
    case Policy::ET2:
      return std::make_unique<ErrorPriorityAllocator>(config.K);
  }
  throw InternalError("unknown policy");
}

Summary compute_summary(const RunRecord& record) {
  const long T = record.recorded_steps();
  if (T == 0 || record.N == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, false};
  }
  double e = 0.0;
  double u = 0.0;
  for (long k = 0; k < T; ++k) {
    for (int i = 0; i < record.N; ++i) {
      e += record.eps_norm[static_cast<std::size_t>(k) * record.N + i];
    }
    u += record.utilization[k];
  }
  return {e / (static_cast<double>(record.N) * T), u / T, true};
}

namespace {

const RunConfig& checked(const RunConfig& config) {
  config.validate();
  return config;
}

}  // namespace

Simulation::Simulation(const RunConfig& config,
                       std::shared_ptr<const ExitProbTable> table,
                       bool allow_mismatch)
    : Simulation(config, table,
                 make_allocator(checked(config), table), allow_mismatch) {}

Simulation::Simulation(const RunConfig& config,
                       std::shared_ptr<const ExitProbTable> table,
                       std::unique_ptr<Allocator> allocator,
                       bool allow_mismatch)
    : config_(checked(config)),
      fleet_(build_fleet(config_)),
      table_(std::move(table)),
      allocator_(std::move(allocator)),
      buffer_(allocator_ ? allocator_->lead() : 0),
      network_(config_.network()),
      trigger_(config_.trigger()),
      schedule_rng_(derive_seed(config_.seed, stream_tag("schedule"))) {
  if (!allocator_) throw ConfigError("no allocator given");
  if (table_ && !allow_mismatch &&
      table_->spec_fingerprint != expected_table_fingerprint(config_)) {
    throw ConfigError(
        "exit table fingerprint " + fingerprint_hex(table_->spec_fingerprint) +
        " does not match the configuration (expected " +
        fingerprint_hex(expected_table_fingerprint(config_)) +
        "); rebuild it with build-table");
  }

  const int N = fleet_.size();
  steps_ = config_.steps();
  for (int i = 0; i < N; ++i) {
    fleet_.models[i].validate();
    fleet_.laws[i].validate(fleet_.models[i]);
    noise_.emplace_back(fleet_.models[i].sigma_w);
    noise_rng_.emplace_back(
        derive_seed(config_.seed, stream_tag("process-noise"), i));
    // The initial state is known to every predictor.
    RandomStream init(derive_seed(config_.seed, stream_tag("initial-state"), i));
    x_.push_back(GaussianSampler(fleet_.initial_covariance[i]).sample(init));
    x_hat_.push_back(x_.back());
    u_.push_back(Vector::Zero(fleet_.models[i].nu()));
    w_.push_back(Vector::Zero(fleet_.models[i].nx()));
  }
  z_.assign(N, 0.0);
  eps_.assign(N, 0.0);

  record_.scenario = std::string(to_string(config_.scenario));
  record_.policy = config_.policy;
  record_.N = N;
  record_.K = config_.K;
  record_.M = allocator_->lead();
  record_.n_x = fleet_.nx();
  record_.dt = fleet_.dt;
  record_.planned_steps = steps_;
  record_.config_fingerprint = config_fingerprint(config_);
  record_.table_fingerprint = table_ ? table_->spec_fingerprint : 0;
  record_.seed = config_.seed;
  record_.utilization.reserve(steps_);
  record_.n_priority.reserve(steps_);
  record_.n_comm.reserve(steps_);
  record_.eps_norm.reserve(static_cast<std::size_t>(steps_) * N);
  record_.z_norm.reserve(static_cast<std::size_t>(steps_) * N);
  record_.granted.reserve(static_cast<std::size_t>(steps_) * N);
  record_.triggered.reserve(static_cast<std::size_t>(steps_) * N);
}

bool Simulation::finished() const { return stopped_ || k_ >= steps_; }

void Simulation::step() {
  if (finished()) throw Error("simulation already finished");
  try {
    advance(k_);
  } catch (const RunError&) {
    throw;
  } catch (const std::exception& e) {
    stopped_ = true;
    throw RunError(k_, e.what());
  }
  ++k_;
}

void Simulation::advance(long k) {
  const int N = fleet_.size();

  // Estimation errors, before any reset.
  for (int i = 0; i < N; ++i) z_[i] = estimation_error(x_[i], x_hat_[i]).norm;

  // Allocation: for step k+M (predictive) or k (event-triggered).
  auto decided = allocator_->allocate(k, z_, schedule_rng_);
  buffer_.put(std::move(decided.allocation));
  const SlotAllocation slots = buffer_.take(k);

  // Triggers and zero-delay delivery.
  int n_comm = 0;
  const std::size_t row = record_.granted.size();
  record_.granted.resize(row + N, 0);
  record_.triggered.resize(row + N, 0);
  for (AgentId i : slots.granted) {
    record_.granted[row + i] = 1;
    if (trigger_decision(true, z_[i], trigger_)) {
      record_.triggered[row + i] = 1;
      x_hat_[i] = x_[i];
      ++n_comm;
    }
  }
  if (static_cast<int>(slots.granted.size()) > network_.K) {
    throw AccountingError("more grants than slots");
  }

  // Controls from predictions only, so every predictor agrees on u.
  for (int i = 0; i < N; ++i) {
    const auto& law = fleet_.laws[i];
    u_[i].noalias() = law.F_self * x_hat_[i];
    for (const auto& [j, F] : law.F_others) u_[i].noalias() += F * x_hat_[j];
  }

  // Advance processes (with disturbances) and predictors.
  for (int i = 0; i < N; ++i) {
    noise_[i].sample_into(noise_rng_[i], w_[i]);
    Vector applied = u_[i];
    for (const auto& d : fleet_.disturbances) {
      if (d.target == i) applied = apply_disturbance(d, k, fleet_.dt, applied);
    }
    x_[i] = step_process(fleet_.models[i], x_[i], applied, w_[i]);
    x_hat_[i] = step_predictor(fleet_.models[i], x_hat_[i], u_[i]);
  }

  // Accounting.
  fleet_.control_error(x_, eps_);
  record_.utilization.push_back(
      network_utilization(network_, decided.n_priority, n_comm));
  record_.n_priority.push_back(decided.n_priority);
  record_.n_comm.push_back(n_comm);
  record_.eps_norm.insert(record_.eps_norm.end(), eps_.begin(), eps_.end());
  record_.z_norm.insert(record_.z_norm.end(), z_.begin(), z_.end());

  for (int i = 0; i < N; ++i) {
    const double norm = x_[i].norm();
    if (!std::isfinite(norm) || norm > config_.divergence_bound) {
      record_.diverged = true;
      record_.divergence_step = k;
      stopped_ = true;
      break;
    }
  }
}

RunRecord Simulation::finish() {
  while (!finished()) step();
  const auto s = compute_summary(record_);
  record_.E_bar = s.E_bar;
  record_.U_bar = s.U_bar;
  record_.metrics_defined = s.defined;
  return record_;
}

RunRecord run(const RunConfig& config,
              std::shared_ptr<const ExitProbTable> table,
              bool allow_mismatch) {
  Simulation sim(config, std::move(table), allow_mismatch);
  return sim.finish();
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::N: return "N";
    case SweepAxis::K: return "K";
    case SweepAxis::Policy: return "policy";
  }
  return "?";
}

SweepAxis parse_axis(std::string_view name) {
  std::string lower(name);
  for (char& c : lower) c = static_cast<char>(std::tolower(c));
  if (lower == "n") return SweepAxis::N;
  if (lower == "k") return SweepAxis::K;
  if (lower == "policy") return SweepAxis::Policy;
  throw ConfigError("unknown sweep axis '" + std::string(name) +
                    "' (expected N, K or policy)");
}

namespace {

int parse_int(const std::string& value, std::string_view axis) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw ConfigError("sweep value '" + value + "' for axis " +
                      std::string(axis) + " is not an integer");
  }
  return v;
}

}  // namespace

RunConfig sweep_point(const RunConfig& base, SweepAxis axis,
                      const std::string& value) {
  RunConfig cfg = base;
  const auto tag = stream_tag(to_string(axis));
  switch (axis) {
    case SweepAxis::N:
      cfg.N = parse_int(value, "N");
      cfg.seed = derive_seed(base.seed, tag, static_cast<std::uint64_t>(cfg.N));
      break;
    case SweepAxis::K:
      cfg.K = parse_int(value, "K");
      cfg.seed = derive_seed(base.seed, tag, static_cast<std::uint64_t>(cfg.K));
      break;
    case SweepAxis::Policy:
      cfg.policy = parse_policy(value);
      break;
  }
  return cfg;
}

std::vector<SweepEntry> sweep(const RunConfig& base, SweepAxis axis,
                              const std::vector<std::string>& values,
                              std::shared_ptr<const ExitProbTable> table,
                              const SweepOptions& options) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");

  std::vector<SweepEntry> entries;
  std::vector<RunConfig> configs;
  for (const auto& v : values) {
    const RunConfig point = sweep_point(base, axis, v);
    if (axis == SweepAxis::Policy) {
      configs.push_back(point);
    } else {
      for (Policy p : base.policies) {
        configs.push_back(point);
        configs.back().policy = p;
      }
    }
  }
  for (const auto& cfg : configs) {
    SweepEntry e;
    e.value = axis == SweepAxis::Policy ? std::string(to_string(cfg.policy))
              : axis == SweepAxis::N    ? std::to_string(cfg.N)
                                        : std::to_string(cfg.K);
    e.policy = cfg.policy;
    e.seed = cfg.seed;
    entries.push_back(std::move(e));
  }

  // Tables, one per distinct fingerprint, before any run starts.
  std::map<std::uint64_t, std::shared_ptr<const ExitProbTable>> tables;
  std::vector<std::shared_ptr<const ExitProbTable>> per_run(configs.size());
  for (std::size_t r = 0; r < configs.size(); ++r) {
    if (!is_predictive(configs[r].policy)) continue;
    if (table) {
      per_run[r] = table;
      continue;
    }
    try {
      configs[r].validate();
      const auto fp = expected_table_fingerprint(configs[r]);
      auto& slot = tables[fp];
      if (!slot) {
        slot = std::make_shared<const ExitProbTable>(build_table_for(configs[r]));
      }
      per_run[r] = slot;
    } catch (const std::exception& e) {
      entries[r].error = e.what();
    }
  }

  unsigned jobs = options.jobs == 0
                      ? std::max(1u, std::thread::hardware_concurrency())
                      : options.jobs;
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(configs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < configs.size(); r = next++) {
      if (!entries[r].error.empty()) continue;
      try {
        entries[r].record =
            run(configs[r], per_run[r], options.allow_mismatch);
      } catch (const std::exception& e) {
        entries[r].error = e.what();
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  return entries;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

std::string header_line(std::string_view kind, std::uint64_t fingerprint,
                        std::uint64_t seed) {
  return "# " + std::string(kind) + " v1 config=" +
         fingerprint_hex(fingerprint) + " seed=" + std::to_string(seed);
}

}  // namespace

void write_run_csv(const RunRecord& record, std::ostream& out) {
  out << header_line("ptrig-run", record.config_fingerprint, record.seed)
      << " scenario=" << record.scenario
      << " policy=" << to_string(record.policy) << " N=" << record.N
      << " K=" << record.K << " M=" << record.M
      << " table=" << fingerprint_hex(record.table_fingerprint) << '\n';
  out << "step,time,U,N_p,N_c,granted,triggered";
  for (int i = 0; i < record.N; ++i) out << ",eps_" << i;
  for (int i = 0; i < record.N; ++i) out << ",z_" << i;
  out << '\n';
  const std::size_t N = record.N;
  std::string bits(N, '0');
  for (long k = 0; k < record.recorded_steps(); ++k) {
    const std::size_t row = static_cast<std::size_t>(k) * N;
    out << k << ',' << format_double(k * record.dt) << ','
        << format_double(record.utilization[k]) << ','
        << record.n_priority[k] << ',' << record.n_comm[k] << ',';
    for (std::size_t i = 0; i < N; ++i) bits[i] = record.granted[row + i] ? '1' : '0';
    out << bits << ',';
    for (std::size_t i = 0; i < N; ++i) bits[i] = record.triggered[row + i] ? '1' : '0';
    out << bits;
    for (std::size_t i = 0; i < N; ++i) out << ',' << format_double(record.eps_norm[row + i]);
    for (std::size_t i = 0; i < N; ++i) out << ',' << format_double(record.z_norm[row + i]);
    out << '\n';
  }
}

std::string run_summary_json(const RunRecord& record) {
  nlohmann::ordered_json j;
  j["format"] = "ptrig-run-summary";
  j["version"] = 1;
  j["config_fingerprint"] = fingerprint_hex(record.config_fingerprint);
  j["table_fingerprint"] = fingerprint_hex(record.table_fingerprint);
  j["seed"] = record.seed;
  j["scenario"] = record.scenario;
  j["policy"] = std::string(to_string(record.policy));
  j["N"] = record.N;
  j["K"] = record.K;
  j["M"] = record.M;
  j["planned_steps"] = record.planned_steps;
  j["recorded_steps"] = record.recorded_steps();
  j["metrics_defined"] = record.metrics_defined;
  j["E_bar"] = record.metrics_defined ? nlohmann::ordered_json(record.E_bar)
                                      : nlohmann::ordered_json(nullptr);
  j["U_bar"] = record.metrics_defined ? nlohmann::ordered_json(record.U_bar)
                                      : nlohmann::ordered_json(nullptr);
  j["status"] = record.diverged ? "DIVERGED" : "OK";
  j["diverged"] = record.diverged;
  j["divergence_step"] = record.diverged
                             ? nlohmann::ordered_json(record.divergence_step)
                             : nlohmann::ordered_json(nullptr);
  return j.dump(2) + "\n";
}

void write_sweep_csv(const RunConfig& base, SweepAxis axis,
                     const std::vector<SweepEntry>& entries,
                     std::ostream& out) {
  out << header_line("ptrig-sweep", config_fingerprint(base), base.seed)
      << " axis=" << to_string(axis) << '\n';
  out << "axis,value,policy,seed,E_bar,U_bar,diverged,divergence_step,status,"
         "message\n";
  for (const auto& e : entries) {
    out << to_string(axis) << ',' << e.value << ',' << to_string(e.policy)
        << ',' << e.seed << ',';
    if (e.record) {
      const auto& r = *e.record;
      out << format_double(r.metrics_defined ? r.E_bar : NAN) << ','
          << format_double(r.metrics_defined ? r.U_bar : NAN) << ','
          << (r.diverged ? 1 : 0) << ',' << r.divergence_step << ','
          << (r.diverged ? "DIVERGED" : "OK") << ",\n";
    } else {
      std::string msg = e.error;
      for (char& ch : msg) {
        if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
      }
      out << "nan,nan,0,-1,ERROR," << msg << '\n';
    }
  }
}

}  // namespace ptrig
