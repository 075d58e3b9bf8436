#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <vector>

#include "poquim/likelihood.hpp"
#include "poquim/model.hpp"

namespace poquim::detail {

/// Entry access for the score quadratic forms at a fitted theta, consumed
/// by the index-class sweeps. For REML the kernel is the standardized
/// projection P_w = lambda P; for ML it is W^{-1} = lambda V^{-1}.
///   form 0:   B_0 = kernel / (2 lambda^2)      (REML)
///             C_0 = kernel / (2 lambda^2)      (ML)
///   form j:   B_j = K_j K_j' / (2 lambda),  K_j = kernel * Z_j
/// Gamma(a,b) = sum_t gamma_t z_at . z_bt with gamma_0 = 1.
class QuimSource {
 public:
  virtual ~QuimSource() = default;

  int n_forms() const { return static_cast<int>(K_.size()) + 1; }
  int n_obs() const { return N_; }
  double lambda() const { return lambda_; }

  /// out(r, c) = form_j[rows[r], rows[c]]; out must be sized.
  void fill_form_block(int j, std::span<const int> rows, MatrixXd& out) const;
  /// Diagonal entries form_j[i, i] for all i.
  VectorXd form_diagonal(int j) const;

  void fill_gamma_block(std::span<const int> rows, MatrixXd& out) const;
  VectorXd gamma_diagonal() const;

  /// ML only: rows of q_j = V^{-1} X_j; out(r, j) = q_j[rows[r]].
  const MatrixXd& q_columns() const { return qcols_; }

 protected:
  QuimSource(const ModelSpec& model, double lambda, const VectorXd& gamma)
      : model_(&model), lambda_(lambda), gamma_(gamma),
        N_(model.n_obs()) {}

  virtual double kernel_entry(int a, int b) const = 0;

  const ModelSpec* model_;
  double lambda_;
  VectorXd gamma_;
  int N_;
  std::vector<MatrixXd> K_;  // K_[t]: N x m_t
  MatrixXd qcols_;           // N x p (ML), empty for REML
};

/// Kernel stored as a dense N x N matrix (reference route).
class DenseQuimSource final : public QuimSource {
 public:
  DenseQuimSource(const ModelSpec& model, double lambda, const VectorXd& gamma,
                  MatrixXd kernel, std::vector<MatrixXd> K, MatrixXd qcols);

 private:
  double kernel_entry(int a, int b) const override { return kernel_(a, b); }
  MatrixXd kernel_;
};

/// Kernel in factored form I - Zhat Zhat' - Xhat Xhat' (Xhat empty for
/// ML); entries are short dot products, never materializing N x N.
class FactorQuimSource final : public QuimSource {
 public:
  FactorQuimSource(const ModelSpec& model, double lambda, const VectorXd& gamma,
                   MatrixXd Zhat, MatrixXd Xhat, std::vector<MatrixXd> K,
                   MatrixXd qcols);

 private:
  double kernel_entry(int a, int b) const override;
  MatrixXd Zhat_, Xhat_;
};

/// Evaluation of the quasi-(restricted-)likelihood and its derivatives at
/// one theta, through either linear-algebra route. Construction does the
/// cheap work needed for the likelihood value; score/Hessian blocks are
/// materialized on first use.
class Engine {
 public:
  Engine(const DesignContext& ctx, const DataContext& data,
         const VarianceComponents& theta, Backend backend);

  double reml_loglik() const;
  VectorXd reml_score();
  MatrixXd reml_expected_hessian();

  const VectorXd& gls() const { return beta_gls_; }

  double ml_loglik(const VectorXd& beta) const;
  double ml_profile_loglik() const { return ml_loglik(beta_gls_); }
  VectorXd ml_score(const VectorXd& beta);
  MatrixXd ml_expected_hessian();
  /// Theta block of the ML score at the GLS beta (the beta block is 0).
  VectorXd ml_profile_score();
  /// Theta block of the ML expected Hessian.
  MatrixXd ml_theta_expected_hessian();

  /// X'V^{-1}X = X'W^{-1}X / lambda.
  MatrixXd xvx() const;

  std::unique_ptr<QuimSource> reml_quim_source();
  std::unique_ptr<QuimSource> ml_quim_source();

  bool used_reduced() const { return reduced_; }

 private:
  void ensure_zblocks();

  const DesignContext* ctx_;
  const DataContext* data_;
  VarianceComponents theta_;
  bool reduced_;

  int N_, p_, s_, q_;
  std::vector<int> active_;    // terms with gamma_t > 0
  std::vector<int> acols_;     // active column indices into Zall
  double logdet_w_ = 0.0;

  // Base quantities (always computed).
  MatrixXd xwx_;               // X'W^{-1}X
  Eigen::LLT<MatrixXd> xwx_llt_;
  VectorXd xwy_;               // X'W^{-1}y
  double ywy_ = 0.0;           // y'W^{-1}y
  VectorXd beta_gls_;
  double ypwy_ = 0.0;          // y'P_w y

  // Backend state for W^{-1} products.
  Eigen::LLT<MatrixXd> dense_llt_;   // dense: LLT of W
  Eigen::LLT<MatrixXd> a_llt_;       // reduced: LLT of G^{-1} + Z+'Z+
  MatrixXd hx_;                // reduced: L_A^{-1} (Z+'X)
  VectorXd hy_;                // reduced: L_A^{-1} (Z+'y)

  // Lazy random-design blocks.
  bool zblocks_ready_ = false;
  MatrixXd zwz_;               // Z'W^{-1}Z (q x q)
  VectorXd zwy_;               // Z'W^{-1}y (q)
  MatrixXd zwx_;               // Z'W^{-1}X (q x p)
  MatrixXd zpz_;               // Z'P_w Z (q x q), REML only
  VectorXd zpy_;               // Z'P_w y (q)
};

Backend resolve_backend(Backend requested, int N, int q);

}  // namespace poquim::detail
