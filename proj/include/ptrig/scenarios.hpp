#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptrig/exit_probability.hpp"
#include "ptrig/model.hpp"
#include "ptrig/random.hpp"
#include "ptrig/types.hpp"

namespace ptrig {

enum class ScenarioKind { Cacc, CartPoleSync, CartPoleStabilize };

std::string_view to_string(ScenarioKind kind);
ScenarioKind parse_scenario(std::string_view name);

/// Vehicle platoon on a multi-lane highway behind constant-velocity virtual
/// reference vehicles. Defaults are the Example-1 settings.
struct CaccParams {
  int lanes = 5;
  double v_ref = 20.0;  // m/s
  double L = 4.0;       // vehicle length, m
  double r = 2.5;       // standstill distance, m
  double tau = 0.01;    // engine time constant, s
  double h = 0.7;       // time gap, s
  double k_p = 0.2;
  double k_d = 0.7;
  double k_dd = 0.0;
  double dt = 0.01;
  double sigma_w = 9e-6;  // per-component process noise variance
  double delta = 0.01;
  /// Variance of the initial position deviation of each vehicle, m².
  double initial_variance = 0.01;

  void validate() const;
};

/// Vehicle i in the spacing-error coordinates of the platoon literature,
/// recovered from the simulated local states of i and its predecessor.
struct CaccVehicleState {
  double e = 0.0;       // spacing error d - d_r
  double e_dot = 0.0;
  double e_ddot = 0.0;
  double alpha = 0.0;   // desired acceleration
  double v = 0.0;       // velocity
  double d = 0.0;       // distance to the predecessor's rear bumper
};

struct DisturbanceSpec {
  enum class Kind { None, Sinusoid, Impulse };
  Kind kind = Kind::None;
  double amplitude = 0.0;
  double frequency = 0.0;  // Hz, sinusoid
  double time = 0.0;       // s, impulse
  AgentId target = 0;
  int channel = 0;

  void validate() const;
};

/// Cart-pole fleet. Defaults are the identified model and Example-2
/// settings. State is [s, θ, ṡ, θ̇], input is the motor command.
struct CartPoleParams {
  Matrix A;
  Matrix B;
  double sigma_w = 2.5e-5;
  /// Noise variance of the physical agent, injected on its state.
  double sigma_eps = 1e-6;
  Matrix Q;
  Matrix R;
  Matrix Q_sync;
  double dt = 0.01;
  double delta = 0.02;
  bool physical_agent = true;
  AgentId physical_id = 0;
  /// Relative amplitude of the i.i.d. perturbation of A for simulated
  /// agents in the stabilization fleet.
  double heterogeneity = 0.02;
  double sinusoid_amplitude = 0.5;
  double sinusoid_frequency = 0.2;
  /// Agent receiving the sinusoid in sync mode; -1 selects the last agent.
  AgentId disturbed_agent = -1;
  double impulse_amplitude = 2.0;
  double physical_impulse_time = 20.0;
  double impulse_window_start = 10.0;
  /// Impulse window ends this long before the end of the run.
  double impulse_window_margin = 5.0;
  double initial_variance = 0.01;

  CartPoleParams();
  void validate() const;
};

/// The identified cart-pole model.
Matrix cartpole_identified_A();
Matrix cartpole_identified_B();

using ControlErrorFn =
    std::function<void(std::span<const Vector> states, std::span<double> out)>;

/// Everything the simulator needs about a concrete experiment. Immutable once
/// built.
struct Fleet {
  ScenarioKind kind = ScenarioKind::Cacc;
  std::vector<AgentModel> models;
  std::vector<FeedbackLaw> laws;
  /// Ω_i: agents whose predictions agent i uses.
  std::vector<std::vector<AgentId>> listens_to;
  std::vector<DisturbanceSpec> disturbances;
  /// Covariance of each agent's initial state.
  std::vector<Matrix> initial_covariance;
  /// Nominal error process used for the exit-probability table.
  ErrorProcessSpec error_process;
  /// Writes ‖ε_i‖ for every agent given all true states.
  ControlErrorFn control_error;
  double dt = 0.0;

  int size() const { return static_cast<int>(models.size()); }
  int nx() const { return models.empty() ? 0 : models.front().nx(); }
};

/// Exact zero-order-hold discretization of (Ac, Bc) over dt.
std::pair<Matrix, Matrix> discretize_zoh(const Matrix& Ac, const Matrix& Bc,
                                         double dt);

/// Continuous single-vehicle model in local coordinates
/// [δp, δv, a, α]: position and velocity deviation from the nominal slot,
/// acceleration and desired acceleration.
std::pair<Matrix, Matrix> cacc_continuous_model(const CaccParams& params);

/// Gains such that u = F_self x̂_i + F_pred x̂_{i-1} equals
/// k_p e + k_d ė + k_dd ë + α_{i-1}.
std::pair<Matrix, Matrix> cacc_gains(const CaccParams& params);

CaccVehicleState cacc_vehicle_state(const Vector& own,
                                    const Vector& predecessor,
                                    const CaccParams& params);

/// ε = [v - v_ref, d - d_r] with d_r = r + h·v.
Eigen::Vector2d cacc_control_error(double v, double d,
                                   const CaccParams& params);

/// N vehicles split evenly over the lanes; the first vehicle of each lane
/// follows the virtual reference, the others their predecessor.
Fleet build_cacc_fleet(const CaccParams& params, int N);

enum class CartPoleMode { Sync, Stabilize };

/// `seed` draws the heterogeneous models and impulse times of the
/// stabilization fleet; `duration` bounds the impulse window.
Fleet build_cartpole_fleet(const CartPoleParams& params, int N,
                           CartPoleMode mode, std::uint64_t seed = 0,
                           double duration = 30.0);

struct DareSolution {
  Matrix P;
  /// Feedback gain in the u = F x convention (F = -K).
  Matrix F;
  int iterations = 0;
};

/// Infinite-horizon discrete LQR by fixed-point iteration of the Riccati
/// recursion from P = Q, stopping when successive iterates differ by less
/// than `tolerance` in max norm. Throws ConfigError naming `system` when
/// the iteration does not settle within `max_iterations`.
DareSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q,
                        const Matrix& R, std::string_view system = "system",
                        double tolerance = 1e-10, int max_iterations = 100000);

/// Additive input disturbance at step k.
double disturbance_value(const DisturbanceSpec& spec, long k, double dt);

/// Returns `u` with the disturbance added to its channel.
Vector apply_disturbance(const DisturbanceSpec& spec, long k, double dt,
                         Vector u);

}  // namespace ptrig
