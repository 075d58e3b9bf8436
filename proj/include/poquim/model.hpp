#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace poquim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Mixed linear model y = X beta + sum_t Z_t alpha_t + eps. The error
/// term's identity design is implicit and never stored. Design entries
/// are real-valued; grouping factors use 0/1 indicator columns while
/// slope-type terms carry weights.
struct ModelSpec {
  VectorXd y;                // length N
  MatrixXd X;                // N x p, full column rank
  std::vector<MatrixXd> Z;   // Z[t]: N x m_t, t = 0..s-1
  std::vector<std::string> fixed_names;
  std::vector<std::string> random_names;
  // Terms allowed to have all-zero rows (slope-type loadings). Grouping
  // factors must touch every observation.
  std::vector<bool> allow_zero_rows;

  int n_obs() const { return static_cast<int>(y.size()); }
  int n_fixed() const { return static_cast<int>(X.cols()); }
  int n_random_terms() const { return static_cast<int>(Z.size()); }

  /// Throws std::invalid_argument on dimension mismatch, rank-deficient
  /// X (numerical rank via column-pivoted QR), or undeclared zero rows.
  void validate() const;
};

/// Variance components in Hartley-Rao form: error variance lambda > 0
/// and variance ratios gamma_t >= 0 (gamma_0 = 1 by convention, never
/// stored).
struct VarianceComponents {
  double lambda = 1.0;
  VectorXd gamma;

  int dim() const { return static_cast<int>(gamma.size()) + 1; }
  void validate() const;

  /// Flat (s+1)-vector (lambda, gamma_1, ..., gamma_s).
  VectorXd as_vector() const;
  static VarianceComponents from_vector(const VectorXd& v);
};

struct FixedEffects {
  VectorXd beta;
};

/// V = lambda (I + sum_t gamma_t Z_t Z_t'), symmetric positive definite.
MatrixXd build_covariance(const VarianceComponents& theta, const ModelSpec& model);

/// P = V^{-1} - V^{-1} X (X' V^{-1} X)^{-1} X' V^{-1}. Satisfies PX = 0,
/// PVP = P and tr(PV) = N - p.
MatrixXd build_projection(const VarianceComponents& theta, const ModelSpec& model);

/// Generalized least squares estimate at the given variance components.
FixedEffects gls_beta(const VarianceComponents& theta, const ModelSpec& model);

/// u = y - X beta.
VectorXd residuals(const FixedEffects& beta, const ModelSpec& model);

}  // namespace poquim
