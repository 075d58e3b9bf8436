#include "poquim/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace poquim {

void ModelSpec::validate() const {
  const int N = n_obs();
  const int p = n_fixed();
  if (N == 0) throw std::invalid_argument("model: empty response");
  if (X.rows() != N) throw std::invalid_argument("model: X row count != N");
  if (p == 0 || p > N) throw std::invalid_argument("model: need 1 <= p <= N");
  if (!y.allFinite() || !X.allFinite()) {
    throw std::invalid_argument("model: non-finite entries in y or X");
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    throw std::invalid_argument("model: X is numerically rank deficient");
  }
  if (!allow_zero_rows.empty() &&
      allow_zero_rows.size() != Z.size()) {
    throw std::invalid_argument("model: allow_zero_rows size mismatch");
  }
  for (std::size_t t = 0; t < Z.size(); ++t) {
    if (Z[t].rows() != N) {
      throw std::invalid_argument("model: Z[" + std::to_string(t) +
                                  "] row count != N");
    }
    if (!Z[t].allFinite()) {
      throw std::invalid_argument("model: non-finite entries in Z[" +
                                  std::to_string(t) + "]");
    }
    const bool zero_ok = !allow_zero_rows.empty() && allow_zero_rows[t];
    if (!zero_ok) {
      for (int i = 0; i < N; ++i) {
        if (Z[t].row(i).cwiseAbs().maxCoeff() == 0.0) {
          throw std::invalid_argument(
              "model: zero row " + std::to_string(i) + " in grouping term " +
              std::to_string(t) + " (declare the term slope-type to allow)");
        }
      }
    }
  }
}

void VarianceComponents::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("variance components: lambda must be > 0");
  }
  for (int t = 0; t < gamma.size(); ++t) {
    if (!(gamma[t] >= 0.0) || !std::isfinite(gamma[t])) {
      throw std::invalid_argument("variance components: gamma must be >= 0");
    }
  }
}

VectorXd VarianceComponents::as_vector() const {
  VectorXd v(dim());
  v[0] = lambda;
  v.tail(gamma.size()) = gamma;
  return v;
}

VarianceComponents VarianceComponents::from_vector(const VectorXd& v) {
  VarianceComponents theta;
  theta.lambda = v[0];
  theta.gamma = v.tail(v.size() - 1);
  return theta;
}

MatrixXd build_covariance(const VarianceComponents& theta, const ModelSpec& model) {
  theta.validate();
  const int N = model.n_obs();
  if (static_cast<int>(model.Z.size()) != theta.gamma.size()) {
    throw std::invalid_argument("build_covariance: theta/model term count mismatch");
  }
  MatrixXd V = MatrixXd::Identity(N, N);
  for (std::size_t t = 0; t < model.Z.size(); ++t) {
    if (model.Z[t].rows() != N) {
      throw std::invalid_argument("build_covariance: Z dimension mismatch");
    }
    const double g = theta.gamma[static_cast<int>(t)];
    if (g != 0.0) V.noalias() += g * (model.Z[t] * model.Z[t].transpose());
  }
  return theta.lambda * V;
}

MatrixXd build_projection(const VarianceComponents& theta, const ModelSpec& model) {
  const MatrixXd V = build_covariance(theta, model);
  Eigen::LLT<MatrixXd> llt(V);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("build_projection: V is not positive definite");
  }
  const MatrixXd Vi = llt.solve(MatrixXd::Identity(model.n_obs(), model.n_obs()));
  const MatrixXd ViX = llt.solve(model.X);
  const MatrixXd S = model.X.transpose() * ViX;
  Eigen::LLT<MatrixXd> llt_s(S);
  if (llt_s.info() != Eigen::Success) {
    throw std::runtime_error("build_projection: X'V^{-1}X is numerically singular");
  }
  MatrixXd P = Vi - ViX * llt_s.solve(ViX.transpose());
  P = 0.5 * (P + P.transpose()).eval();
  return P;
}

FixedEffects gls_beta(const VarianceComponents& theta, const ModelSpec& model) {
  const MatrixXd V = build_covariance(theta, model);
  Eigen::LLT<MatrixXd> llt(V);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("gls_beta: V is not positive definite");
  }
  const MatrixXd ViX = llt.solve(model.X);
  const MatrixXd S = model.X.transpose() * ViX;
  Eigen::LLT<MatrixXd> llt_s(S);
  if (llt_s.info() != Eigen::Success) {
    throw std::runtime_error("gls_beta: X'V^{-1}X is numerically singular");
  }
  FixedEffects fe;
  fe.beta = llt_s.solve(ViX.transpose() * model.y);
  return fe;
}

VectorXd residuals(const FixedEffects& beta, const ModelSpec& model) {
  if (beta.beta.size() != model.X.cols()) {
    throw std::invalid_argument("residuals: beta dimension mismatch");
  }
  return model.y - model.X * beta.beta;
}

}  // namespace poquim
