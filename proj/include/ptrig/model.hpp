#pragma once

#include <map>
#include <optional>

#include "ptrig/random.hpp"
#include "ptrig/types.hpp"

namespace ptrig {

/// Discrete-time LTI agent: x⁺ = A x + B u + w, w ~ N(0, sigma_w).
struct AgentModel {
  Matrix A;
  Matrix B;
  Matrix sigma_w;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }

  /// Throws ConfigError on inconsistent dimensions, an asymmetric noise
  /// covariance, or one with an eigenvalue below -1e-10.
  void validate() const;
};

/// What an agent knows: its true state, the shared prediction of its own
/// state, and predictions of the agents it listens to.
struct AgentState {
  Vector x;
  Vector x_hat_self;
  std::map<AgentId, Vector> x_hat_others;
};

/// u = F_self x̂_self + Σ_j F_others[j] x̂_j.
struct FeedbackLaw {
  Matrix F_self;
  std::map<AgentId, Matrix> F_others;

  void validate(const AgentModel& model) const;
};

struct EstimationError {
  Vector z;
  double norm = 0.0;
};

Vector step_process(const AgentModel& model, const Vector& x, const Vector& u,
                    const Vector& noise);

/// Deterministic predictor. A communicated state replaces the prediction
/// verbatim.
Vector step_predictor(const AgentModel& model, const Vector& x_hat,
                      const Vector& u,
                      const std::optional<Vector>& communicated = std::nullopt);

Vector control_input(const FeedbackLaw& law, const AgentState& state);

EstimationError estimation_error(const Vector& x, const Vector& x_hat);

/// Square root L of a PSD covariance (L Lᵀ = sigma). Cholesky when it
/// succeeds; otherwise a symmetric eigendecomposition with negative
/// eigenvalues clipped to zero.
Matrix covariance_sqrt(const Matrix& sigma);

/// Draws N(0, sigma) samples from a precomputed square root.
class GaussianSampler {
 public:
  GaussianSampler() = default;
  explicit GaussianSampler(const Matrix& sigma);

  Vector sample(RandomStream& rng) const;
  /// In-place variant; `out` must already have the right size.
  void sample_into(RandomStream& rng, Vector& out) const;
  bool is_zero() const { return zero_; }
  int dim() const { return static_cast<int>(root_.rows()); }

 private:
  Matrix root_;
  bool zero_ = true;
};

/// Largest eigenvalue modulus.
double spectral_radius(const Matrix& A);

}  // namespace ptrig
