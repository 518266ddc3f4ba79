// One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ptrig/config.hpp"
#include "ptrig/simulation.hpp"

using namespace ptrig;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 ------------------------------------------------------------------------
Outcome utilization_arithmetic() {
  const NetworkSpec et2{100, 20, 4, Policy::ET2};
  const NetworkSpec pt{100, 20, 4, Policy::PT};
  const double u_et2 = network_utilization(et2, 100, 20);
  const double u_pt = network_utilization(pt, 100, 20);
  const bool ok = et2.capacity() == 720.0 && u_et2 == 1.0 &&
                  std::abs(u_pt - 420.0 / 720.0) < 1e-12;
  return {ok, fmt("eta=%g U(ET2)=%.17g U(PT)=%.17g", et2.capacity(), u_et2, u_pt)};
}

// 2 ------------------------------------------------------------------------
Outcome exit_table_laws() {
  const RunConfig c = load_preset("example2-sync");
  const int steps = 10;
  const auto t = build_exit_table(table_spec(c), 51, steps, 10000, c.table.seed);
  int range = 0, monotone = 0, boundary = 0, initial = 0;
  for (int g = 0; g < t.grid_size(); ++g) {
    for (int m = 0; m <= steps; ++m) {
      const double v = t.at(g, m);
      if (!(v >= 0.0 && v <= 1.0)) ++range;
      if (m > 0 && t.at(g, m - 1) > v) ++monotone;
    }
    if (g + 1 < t.grid_size() && t.at(g, 0) != 0.0) ++initial;
  }
  for (int m = 0; m <= steps; ++m) {
    if (t.at(t.grid_size() - 1, m) != 1.0) ++boundary;
  }
  return {range + monotone + boundary + initial == 0,
          fmt("51x%d grid, violations: range %d, monotone %d, H(delta,.)!=1 %d, "
              "H(.,0)!=0 %d; H(0,%d)=%.4f",
              steps + 1, range, monotone, boundary, initial, steps, t.at(0, steps))};
}

// 3 ------------------------------------------------------------------------
// Direct simulation of an always-scheduled agent: communicate whenever the
// error leaves D, which resets it to zero.
double reset_process_probability(double a, double sigma, double delta,
                                 double z0, int M, int runs) {
  std::mt19937_64 g(777);
  std::normal_distribution<double> n(0.0, sigma);
  int hits = 0;
  for (int r = 0; r < runs; ++r) {
    double z = z0;
    bool comm = std::abs(z) >= delta;
    for (int m = 1; m <= M; ++m) {
      if (comm) z = 0.0;
      z = a * z + n(g);
      comm = std::abs(z) >= delta;
    }
    if (comm) ++hits;
  }
  return static_cast<double>(hits) / runs;
}

Outcome chain_rule_oracle() {
  const double a = 0.9, delta = 0.05;
  auto spec_for = [&](double sigma) {
    return ErrorProcessSpec{Matrix::Constant(1, 1, a),
                            Matrix::Constant(1, 1, sigma * sigma), delta, 0.01};
  };
  // σ_w such that H(0, 2) ≈ 0.3.
  double lo = 1e-3, hi = 0.2;
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (lo + hi);
    const auto t = build_exit_table(spec_for(mid), 2, 2, 20000, 3);
    (t.at(0, 2) < 0.3 ? lo : hi) = mid;
  }
  const double sigma = 0.5 * (lo + hi);
  const auto table = build_exit_table(spec_for(sigma), 51, 2, 100000, 5);
  const HorizonParams h{2, delta, 0.0};
  double worst = 0.0;
  std::string detail = fmt("sigma_w=%.5f H(0,2)=%.4f;", sigma, table.at(0, 2));
  for (double z0 : {0.0, 0.5 * delta}) {
    const double chain = m_step_probability(table, h, z0);
    const double direct = reset_process_probability(a, sigma, delta, z0, 2, 100000);
    worst = std::max(worst, std::abs(chain - direct));
    detail += fmt(" z=%.3f chain=%.4f direct=%.4f;", z0, chain, direct);
  }
  detail += fmt(" max |diff|=%.4f (tol 0.05)", worst);
  return {worst <= 0.05, detail};
}

// 4 ------------------------------------------------------------------------
Outcome weight_normalization() {
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int instances = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ExitProbTable t;
    const int grid = 2 + trial % 20;
    t.delta = 0.1 + u(g);
    t.max_steps = 3;
    t.samples = 1;
    for (int i = 0; i < grid; ++i) {
      t.norm_grid.push_back(i == grid - 1 ? t.delta : t.delta * i / (grid - 1));
      double acc = i == grid - 1 ? 1.0 : 0.0;
      t.values.push_back(acc);
      for (int m = 1; m <= 3; ++m) {
        acc = i == grid - 1 ? 1.0 : acc + (1.0 - acc) * u(g);
        t.values.push_back(acc);
      }
    }
    for (int M = 1; M <= 3; ++M) {
      const auto w = sequence_weights(t, M, u(g) * t.delta);
      worst = std::max(worst, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
      ++instances;
    }
  }
  return {worst <= 1e-9, fmt("%d instances, max |sum-1|=%.3g", instances, worst)};
}

// 5 ------------------------------------------------------------------------
Outcome quantization() {
  const int q = quantize(0.48173);
  return {q == 48, fmt("0.48173 -> %d", q)};
}

// 6 ------------------------------------------------------------------------
class ThresholdAllocator final : public Allocator {
 public:
  ThresholdAllocator(int K, double delta) : K_(K), delta_(delta) {}
  int lead() const override { return 0; }
  Result allocate(long step, std::span<const double> z,
                  RandomStream& rng) override {
    std::vector<std::pair<AgentId, double>> keys;
    for (std::size_t i = 0; i < z.size(); ++i) {
      keys.emplace_back(static_cast<AgentId>(i), z[i] >= delta_ ? 1.0 : 0.0);
    }
    return {et2_schedule(keys, K_, rng, step), static_cast<int>(z.size())};
  }

 private:
  int K_;
  double delta_;
};

Outcome zero_horizon_reduction() {
  std::string detail;
  bool ok = true;
  RunConfig sync = load_preset("example2-sync");
  sync.cartpole.physical_agent = false;
  RunConfig cacc = load_preset("example1-cacc");
  cacc.N = 25;
  cacc.duration = 5.0;
  for (RunConfig c : {sync, cacc}) {
    c.M = 0;
    c.policy = Policy::PT;
    const auto table = std::make_shared<const ExitProbTable>(build_table_for(c));
    const auto pt = run(c, table);
    Simulation et(c, nullptr, std::make_unique<ThresholdAllocator>(c.K, c.delta()));
    const auto ref = et.finish();
    long diff = 0, comms = 0;
    for (std::size_t i = 0; i < pt.granted.size(); ++i) {
      diff += pt.granted[i] != ref.granted[i] || pt.triggered[i] != ref.triggered[i];
      comms += pt.triggered[i];
    }
    const bool same = pt.granted.size() == ref.granted.size() && diff == 0;
    ok &= same;
    detail += fmt("%s: %ld steps, %ld transmissions, %ld differing entries; ",
                  pt.scenario.c_str(), pt.recorded_steps(), comms, diff);
  }
  return {ok, detail};
}

// 7, 8 ---------------------------------------------------------------------
struct Means {
  std::map<Policy, double> E, U;
  int diverged = 0;
  int failed = 0;
};

Means policy_means(RunConfig base, const std::vector<std::string>& policies,
                   const std::vector<std::uint64_t>& seeds) {
  const auto table = std::make_shared<const ExitProbTable>(build_table_for(base));
  Means out;
  for (auto s : seeds) {
    base.seed = s;
    for (const auto& e : sweep(base, SweepAxis::Policy, policies, table)) {
      if (!e.record) {
        ++out.failed;
        continue;
      }
      out.diverged += e.record->diverged;
      out.E[e.policy] += e.record->E_bar / seeds.size();
      out.U[e.policy] += e.record->U_bar / seeds.size();
    }
  }
  return out;
}

std::string describe(const Means& m) {
  std::string s;
  for (const auto& [p, e] : m.E) {
    s += fmt("%s E=%.6f U=%.4f, ", std::string(to_string(p)).c_str(), e, m.U.at(p));
  }
  return s;
}

bool base_orderings(const Means& m, std::string& why) {
  using enum Policy;
  bool ok = true;
  auto check = [&](bool cond, const char* what) {
    if (!cond) {
      ok = false;
      why += std::string(why.empty() ? "" : ", ") + what;
    }
  };
  check(m.E.at(PT) < m.E.at(ET2), "E(PT)<E(ET2) fails");
  check(m.E.at(PT) < m.E.at(ET1), "E(PT)<E(ET1) fails");
  check(m.U.at(ET1) < m.U.at(PT), "U(ET1)<U(PT) fails");
  check(m.U.at(PT) < m.U.at(ET2), "U(PT)<U(ET2) fails");
  return ok && m.diverged == 0 && m.failed == 0;
}

Outcome cacc_trend() {
  bool ok = true;
  std::string detail;
  for (int N : {25, 50}) {
    RunConfig c = load_preset("example1-cacc");
    c.N = N;
    c.K = 20;
    c.duration = 20.0;
    const auto m = policy_means(c, {"PT", "ET1", "ET2"}, {1, 2, 3});
    std::string why;
    ok &= base_orderings(m, why);
    detail += fmt("N=%d: %s%s; ", N, describe(m).c_str(), why.empty() ? "ok" : why.c_str());
  }
  return {ok, detail};
}

Outcome sync_trend() {
  bool ok = true;
  std::string detail;
  for (int K : {4, 6, 8}) {
    RunConfig c = load_preset("example2-sync");
    c.cartpole.physical_agent = false;
    c.K = K;
    const auto m = policy_means(c, {"PT", "PT*", "ET1", "ET2"}, {1, 2, 3});
    std::string why;
    bool k_ok = base_orderings(m, why);
    if (!(m.U.at(Policy::PT_STAR) < m.U.at(Policy::PT))) {
      k_ok = false;
      why += ", U(PT*)<U(PT) fails";
    }
    const double rel = std::abs(m.E.at(Policy::PT_STAR) - m.E.at(Policy::PT)) / m.E.at(Policy::PT);
    if (!(rel <= 0.10)) {
      k_ok = false;
      why += ", E(PT*) not within 10% of E(PT)";
    }
    ok &= k_ok;
    detail += fmt("K=%d: %s|dE*|=%.1f%%%s%s; ", K, describe(m).c_str(), 100 * rel,
                  why.empty() ? "" : " ", why.c_str());
  }
  return {ok, detail};
}

// 9 ------------------------------------------------------------------------
Outcome instability_threshold() {
  const RunConfig base = load_preset("example2-sync");
  const auto table = std::make_shared<const ExitProbTable>(build_table_for(base));
  bool ok = true;
  std::string detail;
  for (int K : {1, 2}) {
    RunConfig c = base;
    c.K = K;
    int diverged = 0, total = 0;
    for (const auto& e : sweep(c, SweepAxis::Policy, {"PT", "PT*", "ET1", "ET2"}, table)) {
      ++total;
      diverged += e.record && e.record->diverged;
    }
    ok &= diverged == total;
    detail += fmt("K=%d: %d/%d diverged; ", K, diverged, total);
  }
  for (int K : {4, 6, 8}) {
    int diverged = 0;
    for (std::uint64_t s : {1, 2, 3}) {
      RunConfig c = base;
      c.K = K;
      c.seed = s;
      const auto r = run(c, table);
      diverged += r.diverged;
    }
    ok &= diverged == 0;
    detail += fmt("K=%d PT: %d/3 diverged; ", K, diverged);
  }
  return {ok, detail};
}

// 10 -----------------------------------------------------------------------
Outcome determinism() {
  RunConfig c = load_preset("example2-sync");
  c.duration = 10.0;
  const auto t1 = build_table_for(c, 1);
  const auto t4 = build_table_for(c, 4);
  const auto table = std::make_shared<const ExitProbTable>(t1);
  auto sweep_csv = [&](unsigned jobs) {
    const auto entries = sweep(c, SweepAxis::K, {"2", "3", "4", "5"}, table, {jobs, false});
    std::ostringstream out;
    write_sweep_csv(c, SweepAxis::K, entries, out);
    return out.str();
  };
  auto run_text = [&] {
    const auto r = run(c, table);
    std::ostringstream out;
    write_run_csv(r, out);
    return out.str() + run_summary_json(r);
  };
  std::ostringstream a, b;
  write_table(t1, a);
  write_table(t4, b);
  const bool tables = a.str() == b.str();
  const bool sweeps = sweep_csv(1) == sweep_csv(4);
  const bool runs = run_text() == run_text();
  return {tables && sweeps && runs,
          fmt("table threads 1 vs 4 %s; sweep jobs 1 vs 4 %s; run replay %s",
              tables ? "identical" : "DIFFER", sweeps ? "identical" : "DIFFER",
              runs ? "identical" : "DIFFER")};
}

// 11 -----------------------------------------------------------------------
Outcome dare_oracle() {
  const Matrix one = Matrix::Ones(1, 1);
  const auto s = solve_dare(one, one, one, one);
  const double scalar_err = std::abs(s.P(0, 0) - (1.0 + std::sqrt(5.0)) / 2.0);
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix A(2, 2), B(2, 1);
    A << u(g), u(g), u(g), u(g);
    A *= 0.9 / std::max(0.9, spectral_radius(A));
    B << u(g), u(g);
    const Matrix Q = Matrix::Identity(2, 2), R = Matrix::Ones(1, 1);
    Matrix P = Matrix::Zero(2, 2);
    for (int i = 0; i < 200; ++i) {
      const Matrix K = (R + B.transpose() * P * B).inverse() * B.transpose() * P * A;
      P = Q + A.transpose() * P * (A - B * K);
    }
    const Matrix F = -(R + B.transpose() * P * B).inverse() * B.transpose() * P * A;
    const auto d = solve_dare(A, B, Q, R);
    worst = std::max({worst, (d.P - P).cwiseAbs().maxCoeff(), (d.F - F).cwiseAbs().maxCoeff()});
  }
  return {scalar_err <= 1e-9 && worst <= 1e-6,
          fmt("scalar |P-(1+sqrt5)/2|=%.2g; 50 random 2x2 max diff vs 200-step recursion %.2g",
              scalar_err, worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"utilization arithmetic", utilization_arithmetic},
      {"exit-table laws", exit_table_laws},
      {"chain rule vs brute-force reset process", chain_rule_oracle},
      {"sequence-weight normalization", weight_normalization},
      {"quantization example", quantization},
      {"M=0 reduction to event triggering", zero_horizon_reduction},
      {"platoon trend (N=25,50)", cacc_trend},
      {"synchronization trend (K=4,6,8)", sync_trend},
      {"instability threshold", instability_threshold},
      {"determinism", determinism},
      {"DARE oracle", dare_oracle},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::printf("%s criterion %zu (%s) [%.1fs]: %s\n", o.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
