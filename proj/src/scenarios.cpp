#include "ptrig/scenarios.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

namespace ptrig {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

bool is_psd(const Matrix& M, double tol = 1e-10) {
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  return es.eigenvalues().minCoeff() >= -tol;
}

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::Cacc: return "cacc";
    case ScenarioKind::CartPoleSync: return "cartpole_sync";
    case ScenarioKind::CartPoleStabilize: return "cartpole_stabilize";
  }
  return "?";
}

ScenarioKind parse_scenario(std::string_view name) {
  std::string lower(name);
  for (char& c : lower) c = static_cast<char>(std::tolower(c));
  if (lower == "cacc") return ScenarioKind::Cacc;
  if (lower == "cartpole_sync") return ScenarioKind::CartPoleSync;
  if (lower == "cartpole_stabilize") return ScenarioKind::CartPoleStabilize;
  throw ConfigError("unknown scenario '" + std::string(name) +
                    "' (expected cacc, cartpole_sync or cartpole_stabilize)");
}

void CaccParams::validate() const {
  require(lanes >= 1, "cacc: lanes must be >= 1");
  require(tau > 0.0, "cacc: tau must be > 0");
  require(h > 0.0, "cacc: h must be > 0");
  require(dt > 0.0, "cacc: dt must be > 0");
  require(sigma_w >= 0.0, "cacc: sigma_w must be >= 0");
  require(delta > 0.0, "cacc: delta must be > 0");
  require(initial_variance >= 0.0, "cacc: initial_variance must be >= 0");
  require(std::isfinite(v_ref) && std::isfinite(L) && std::isfinite(r) &&
              std::isfinite(k_p) && std::isfinite(k_d) && std::isfinite(k_dd),
          "cacc: parameters must be finite");
}

void DisturbanceSpec::validate() const {
  require(std::isfinite(amplitude), "disturbance: amplitude must be finite");
  require(frequency >= 0.0, "disturbance: frequency must be >= 0");
  require(time >= 0.0, "disturbance: time must be >= 0");
  require(target >= 0, "disturbance: target must be an agent id");
  require(channel >= 0, "disturbance: channel must be >= 0");
}

Matrix cartpole_identified_A() {
  Matrix A(4, 4);
  A << 1.0006, -0.0034, 0.0076, 0.0009,
       0.0098, 0.9785, 0.0041, 0.0057,
       0.0231, -0.1186, 0.9268, 0.0366,
       -0.0790, 0.2596, -0.1350, 1.0500;
  return A;
}

Matrix cartpole_identified_B() {
  Matrix B(4, 1);
  B << 0.0003, 0.0002, 0.0076, 0.0160;
  return B;
}

CartPoleParams::CartPoleParams()
    : A(cartpole_identified_A()),
      B(cartpole_identified_B()),
      Q(Vector((Vector(4) << 0.75, 4.0, 0.0, 0.0).finished()).asDiagonal()),
      R(Matrix::Constant(1, 1, 0.05)),
      Q_sync(Vector((Vector(4) << 30.0, 0.0, 0.0, 0.0).finished()).asDiagonal()) {}

void CartPoleParams::validate() const {
  AgentModel probe{A, B, Matrix::Identity(A.rows(), A.rows()) * sigma_w};
  probe.validate();
  const auto n = A.rows();
  require(Q.rows() == n && Q.cols() == n, "cartpole: Q must match A");
  require(Q_sync.rows() == n && Q_sync.cols() == n,
          "cartpole: Q_sync must match A");
  require(R.rows() == B.cols() && R.cols() == B.cols(),
          "cartpole: R must match the input dimension");
  require(is_psd(Q) && is_psd(Q_sync), "cartpole: Q and Q_sync must be PSD");
  require(Eigen::LLT<Matrix>(R).info() == Eigen::Success,
          "cartpole: R must be positive definite");
  require(sigma_w >= 0.0 && sigma_eps >= 0.0,
          "cartpole: noise variances must be >= 0");
  require(dt > 0.0, "cartpole: dt must be > 0");
  require(delta > 0.0, "cartpole: delta must be > 0");
  require(heterogeneity >= 0.0 && heterogeneity < 1.0,
          "cartpole: heterogeneity must be in [0, 1)");
  require(sinusoid_frequency >= 0.0, "cartpole: frequency must be >= 0");
  require(initial_variance >= 0.0, "cartpole: initial_variance must be >= 0");
}

std::pair<Matrix, Matrix> discretize_zoh(const Matrix& Ac, const Matrix& Bc,
                                         double dt) {
  const auto n = Ac.rows();
  const auto m = Bc.cols();
  Matrix aug = Matrix::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = Ac * dt;
  aug.topRightCorner(n, m) = Bc * dt;
  const Matrix e = aug.exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

std::pair<Matrix, Matrix> cacc_continuous_model(const CaccParams& p) {
  // δṗ = δv, δv̇ = a, ȧ = (α - a)/τ, α̇ = (u - α)/h
  Matrix Ac = Matrix::Zero(4, 4);
  Ac(0, 1) = 1.0;
  Ac(1, 2) = 1.0;
  Ac(2, 2) = -1.0 / p.tau;
  Ac(2, 3) = 1.0 / p.tau;
  Ac(3, 3) = -1.0 / p.h;
  Matrix Bc = Matrix::Zero(4, 1);
  Bc(3, 0) = 1.0 / p.h;
  return {Ac, Bc};
}

std::pair<Matrix, Matrix> cacc_gains(const CaccParams& p) {
  // e   = δp_{i-1} - δp_i - h δv_i
  // ė   = δv_{i-1} - δv_i - h a_i
  // ë   = a_{i-1} + (h/τ - 1) a_i - (h/τ) α_i
  const double ht = p.h / p.tau;
  Matrix self(1, 4);
  self << -p.k_p, -p.k_p * p.h - p.k_d, -p.k_d * p.h + p.k_dd * (ht - 1.0),
      -p.k_dd * ht;
  Matrix pred(1, 4);
  pred << p.k_p, p.k_d, p.k_dd, 1.0;
  return {self, pred};
}

CaccVehicleState cacc_vehicle_state(const Vector& own,
                                    const Vector& predecessor,
                                    const CaccParams& p) {
  const double ht = p.h / p.tau;
  CaccVehicleState s;
  s.e = predecessor[0] - own[0] - p.h * own[1];
  s.e_dot = predecessor[1] - own[1] - p.h * own[2];
  s.e_ddot = predecessor[2] + (ht - 1.0) * own[2] - ht * own[3];
  s.alpha = own[3];
  s.v = p.v_ref + own[1];
  s.d = p.r + p.h * p.v_ref + predecessor[0] - own[0];
  return s;
}

Eigen::Vector2d cacc_control_error(double v, double d, const CaccParams& p) {
  return {v - p.v_ref, d - (p.r + p.h * v)};
}

Fleet build_cacc_fleet(const CaccParams& params, int N) {
  params.validate();
  require(N >= 1, "cacc: N must be >= 1");
  require(N % params.lanes == 0,
          "cacc: N=" + std::to_string(N) + " is not divisible by " +
              std::to_string(params.lanes) + " lanes");
  const auto [Ac, Bc] = cacc_continuous_model(params);
  const auto [Ad, Bd] = discretize_zoh(Ac, Bc, params.dt);
  const auto [F_self, F_pred] = cacc_gains(params);
  const double rho = spectral_radius(Ad + Bd * F_self);
  if (!(rho < 1.0)) {
    std::ostringstream os;
    os << "cacc: gains k_p=" << params.k_p << ", k_d=" << params.k_d
       << ", k_dd=" << params.k_dd
       << " do not stabilize the vehicle loop (spectral radius " << rho << ")";
    throw ConfigError(os.str());
  }

  const Matrix sigma = Matrix::Identity(4, 4) * params.sigma_w;
  Matrix init = Matrix::Zero(4, 4);
  init(0, 0) = params.initial_variance;

  const int per_lane = N / params.lanes;
  Fleet fleet;
  fleet.kind = ScenarioKind::Cacc;
  fleet.dt = params.dt;
  std::vector<AgentId> predecessor(N, -1);
  for (int i = 0; i < N; ++i) {
    fleet.models.push_back({Ad, Bd, sigma});
    FeedbackLaw law{F_self, {}};
    std::vector<AgentId> listens;
    if (i % per_lane != 0) {
      predecessor[i] = i - 1;
      law.F_others.emplace(i - 1, F_pred);
      listens.push_back(i - 1);
    }
    fleet.laws.push_back(std::move(law));
    fleet.listens_to.push_back(std::move(listens));
    fleet.initial_covariance.push_back(init);
  }
  fleet.error_process = {Ad, sigma, params.delta, params.dt};
  fleet.control_error = [params, predecessor](std::span<const Vector> x,
                                              std::span<double> out) {
    static const Vector kReference = Vector::Zero(4);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Vector& pred =
          predecessor[i] < 0 ? kReference : x[predecessor[i]];
      const auto s = cacc_vehicle_state(x[i], pred, params);
      out[i] = cacc_control_error(s.v, s.d, params).norm();
    }
  };
  return fleet;
}

Fleet build_cartpole_fleet(const CartPoleParams& params, int N,
                           CartPoleMode mode, std::uint64_t seed,
                           double duration) {
  params.validate();
  require(N >= 2, "cartpole: N must be >= 2");
  const int n = static_cast<int>(params.A.rows());
  const Matrix sigma_sim = Matrix::Identity(n, n) * params.sigma_w;
  const Matrix sigma_phys = Matrix::Identity(n, n) * params.sigma_eps;
  const bool has_physical = params.physical_agent;
  require(!has_physical || (params.physical_id >= 0 && params.physical_id < N),
          "cartpole: physical_id out of range");

  Fleet fleet;
  fleet.dt = params.dt;
  fleet.error_process = {params.A, sigma_sim, params.delta, params.dt};
  auto noise_for = [&](int i) {
    return has_physical && i == params.physical_id ? sigma_phys : sigma_sim;
  };

  if (mode == CartPoleMode::Sync) {
    fleet.kind = ScenarioKind::CartPoleSync;
    // Pairwise synchronization cost Σ_{i<j} (x_i - x_j)ᵀ Q_sync (x_i - x_j)
    // on a homogeneous fleet decouples into the consensus mode (weight Q)
    // and N-1 disagreement modes (weight Q + N·Q_sync).
    const auto consensus = solve_dare(params.A, params.B, params.Q, params.R,
                                      "cart-pole consensus mode");
    const auto disagreement =
        solve_dare(params.A, params.B, params.Q + N * params.Q_sync, params.R,
                   "cart-pole disagreement mode");
    const Matrix F_self =
        consensus.F / N + disagreement.F * (1.0 - 1.0 / N);
    const Matrix F_other = (consensus.F - disagreement.F) / N;
    for (int i = 0; i < N; ++i) {
      fleet.models.push_back({params.A, params.B, noise_for(i)});
      FeedbackLaw law{F_self, {}};
      std::vector<AgentId> listens;
      for (int j = 0; j < N; ++j) {
        if (j == i) continue;
        law.F_others.emplace(j, F_other);
        listens.push_back(j);
      }
      fleet.laws.push_back(std::move(law));
      fleet.listens_to.push_back(std::move(listens));
    }
    const AgentId reference =
        params.disturbed_agent < 0 ? N - 1 : params.disturbed_agent;
    require(reference < N, "cartpole: disturbed_agent out of range");
    if (params.sinusoid_amplitude != 0.0) {
      DisturbanceSpec d;
      d.kind = DisturbanceSpec::Kind::Sinusoid;
      d.amplitude = params.sinusoid_amplitude;
      d.frequency = params.sinusoid_frequency;
      d.target = reference;
      fleet.disturbances.push_back(d);
    }
    fleet.control_error = [reference](std::span<const Vector> x,
                                      std::span<double> out) {
      const double s_ref = x[reference][0];
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::abs(x[i][0] - s_ref);
      }
    };
  } else {
    fleet.kind = ScenarioKind::CartPoleStabilize;
    RandomStream rng(derive_seed(seed, stream_tag("cartpole-fleet")));
    const double window_end = duration - params.impulse_window_margin;
    for (int i = 0; i < N; ++i) {
      const bool physical = has_physical && i == params.physical_id;
      Matrix A = params.A;
      if (!physical) {
        for (Eigen::Index r = 0; r < A.rows(); ++r) {
          for (Eigen::Index c = 0; c < A.cols(); ++c) {
            A(r, c) *= 1.0 + params.heterogeneity * (2.0 * rng.uniform() - 1.0);
          }
        }
      }
      const auto lqr = solve_dare(A, params.B, params.Q, params.R,
                                  "cart-pole agent " + std::to_string(i));
      fleet.models.push_back({A, params.B, noise_for(i)});
      fleet.laws.push_back({lqr.F, {}});
      fleet.listens_to.emplace_back();

      DisturbanceSpec d;
      d.kind = DisturbanceSpec::Kind::Impulse;
      d.amplitude = params.impulse_amplitude;
      d.target = i;
      if (physical) {
        d.time = params.physical_impulse_time;
      } else {
        const double u = rng.uniform();
        if (window_end < params.impulse_window_start) continue;
        d.time = params.impulse_window_start +
                 u * (window_end - params.impulse_window_start);
      }
      if (d.time < duration && d.amplitude != 0.0) {
        fleet.disturbances.push_back(d);
      }
    }
    fleet.control_error = [](std::span<const Vector> x,
                             std::span<double> out) {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i].norm();
    };
  }
  fleet.initial_covariance.assign(
      N, Matrix::Identity(n, n) * params.initial_variance);
  return fleet;
}

DareSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q,
                        const Matrix& R, std::string_view system,
                        double tolerance, int max_iterations) {
  const std::string name(system);
  const auto n = A.rows();
  const auto m = B.cols();
  require(A.cols() == n && B.rows() == n,
          "DARE for " + name + ": A and B dimensions are inconsistent");
  require(Q.rows() == n && Q.cols() == n,
          "DARE for " + name + ": Q must be " + std::to_string(n) + "x" +
              std::to_string(n));
  require(R.rows() == m && R.cols() == m,
          "DARE for " + name + ": R must match the input dimension");
  require(is_psd(Q), "DARE for " + name + ": Q must be symmetric PSD");
  require(Eigen::LLT<Matrix>(R).info() == Eigen::Success,
          "DARE for " + name + ": R must be positive definite");

  DareSolution sol;
  Matrix P = Q;
  for (int it = 1; it <= max_iterations; ++it) {
    const Matrix BtP = B.transpose() * P;
    const Matrix S = R + BtP * B;
    const Matrix K = S.llt().solve(BtP * A);
    Matrix next = Q + A.transpose() * P * A - (BtP * A).transpose() * K;
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) break;
    const double diff = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (diff < tolerance) {
      sol.iterations = it;
      sol.P = P;
      const Matrix BtPf = B.transpose() * P;
      sol.F = -(R + BtPf * B).llt().solve(BtPf * A);
      return sol;
    }
  }
  throw ConfigError("DARE for " + name + " did not converge within " +
                    std::to_string(max_iterations) +
                    " iterations (is (A, B) stabilizable?)");
}

double disturbance_value(const DisturbanceSpec& spec, long k, double dt) {
  switch (spec.kind) {
    case DisturbanceSpec::Kind::None:
      return 0.0;
    case DisturbanceSpec::Kind::Sinusoid:
      return spec.amplitude *
             std::sin(2.0 * std::numbers::pi * spec.frequency * k * dt);
    case DisturbanceSpec::Kind::Impulse:
      return std::llround(spec.time / dt) == k ? spec.amplitude : 0.0;
  }
  return 0.0;
}

Vector apply_disturbance(const DisturbanceSpec& spec, long k, double dt,
                         Vector u) {
  if (spec.kind == DisturbanceSpec::Kind::None) return u;
  if (spec.channel >= u.size()) {
    throw ConfigError("disturbance channel " + std::to_string(spec.channel) +
                      " exceeds the input dimension");
  }
  u[spec.channel] += disturbance_value(spec, k, dt);
  return u;
}

}  // namespace ptrig
