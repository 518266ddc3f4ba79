#include "ptrig/model.hpp"

#include <algorithm>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace ptrig {
namespace {

std::string dims(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_size(const Vector& v, int n, const char* what) {
  if (v.size() != n) {
    std::ostringstream os;
    os << what << " has dimension " << v.size() << ", expected " << n;
    throw ConfigError(os.str());
  }
}

}  // namespace

void AgentModel::validate() const {
  if (A.rows() == 0 || A.rows() != A.cols()) {
    throw ConfigError("A must be square and non-empty, got " + dims(A));
  }
  if (B.rows() != A.rows()) {
    throw ConfigError("B must have " + std::to_string(A.rows()) +
                      " rows, got " + dims(B));
  }
  if (sigma_w.rows() != A.rows() || sigma_w.cols() != A.rows()) {
    throw ConfigError("sigma_w must be " + dims(A) + ", got " +
                      dims(sigma_w));
  }
  if (!A.allFinite() || !B.allFinite() || !sigma_w.allFinite()) {
    throw ConfigError("model matrices contain non-finite entries");
  }
  const double scale = std::max(1.0, sigma_w.cwiseAbs().maxCoeff());
  if ((sigma_w - sigma_w.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ConfigError("sigma_w is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_w);
  if (es.eigenvalues().minCoeff() < -1e-10) {
    throw ConfigError("sigma_w is not positive semidefinite");
  }
}

void FeedbackLaw::validate(const AgentModel& model) const {
  auto check = [&](const Matrix& F, const std::string& name) {
    if (F.rows() != model.nu() || F.cols() != model.nx()) {
      throw ConfigError(name + " must be " + std::to_string(model.nu()) + "x" +
                        std::to_string(model.nx()) + ", got " + dims(F));
    }
  };
  check(F_self, "F_self");
  for (const auto& [id, F] : F_others) {
    check(F, "F_others[" + std::to_string(id) + "]");
  }
}

Vector step_process(const AgentModel& model, const Vector& x, const Vector& u,
                    const Vector& noise) {
  require_size(x, model.nx(), "x");
  require_size(u, model.nu(), "u");
  require_size(noise, model.nx(), "noise");
  return model.A * x + model.B * u + noise;
}

Vector step_predictor(const AgentModel& model, const Vector& x_hat,
                      const Vector& u,
                      const std::optional<Vector>& communicated) {
  require_size(x_hat, model.nx(), "x_hat");
  require_size(u, model.nu(), "u");
  if (communicated) {
    require_size(*communicated, model.nx(), "communicated state");
    return *communicated;
  }
  return model.A * x_hat + model.B * u;
}

Vector control_input(const FeedbackLaw& law, const AgentState& state) {
  if (law.F_self.cols() != state.x_hat_self.size()) {
    throw ConfigError("F_self does not match the own prediction dimension");
  }
  Vector u = law.F_self * state.x_hat_self;
  for (const auto& [id, F] : law.F_others) {
    auto it = state.x_hat_others.find(id);
    if (it == state.x_hat_others.end()) {
      throw ConfigError("no prediction available for agent " +
                        std::to_string(id));
    }
    if (F.cols() != it->second.size() || F.rows() != u.size()) {
      throw ConfigError("gain for agent " + std::to_string(id) +
                        " does not match its prediction");
    }
    u.noalias() += F * it->second;
  }
  return u;
}

EstimationError estimation_error(const Vector& x, const Vector& x_hat) {
  require_size(x_hat, static_cast<int>(x.size()), "x_hat");
  EstimationError e;
  e.z = x - x_hat;
  e.norm = e.z.norm();
  return e;
}

Matrix covariance_sqrt(const Matrix& sigma) {
  if (sigma.size() == 0) return sigma;
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() == Eigen::Success) {
    return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal();
}

GaussianSampler::GaussianSampler(const Matrix& sigma)
    : root_(covariance_sqrt(sigma)),
      zero_(sigma.size() == 0 || sigma.cwiseAbs().maxCoeff() == 0.0) {}

Vector GaussianSampler::sample(RandomStream& rng) const {
  Vector out(root_.rows());
  sample_into(rng, out);
  return out;
}

void GaussianSampler::sample_into(RandomStream& rng, Vector& out) const {
  // Standard normals are always drawn so the stream position does not
  // depend on the covariance.
  Vector std_normal(root_.rows());
  for (Eigen::Index i = 0; i < std_normal.size(); ++i) {
    std_normal[i] = rng.normal();
  }
  if (zero_) {
    out.setZero(root_.rows());
  } else {
    out.noalias() = root_ * std_normal;
  }
}

double spectral_radius(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace ptrig
