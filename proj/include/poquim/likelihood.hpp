#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <vector>

#include "poquim/model.hpp"

namespace poquim {

/// Quadratic-form pieces of the restricted score: component j of the
/// score is u' B_j u - b_j with B_0 = P / (2 lambda),
/// B_j = (lambda/2) P Z_j Z_j' P, b_0 = (N-p)/(2 lambda),
/// b_j = (lambda/2) tr(P Z_j Z_j'). Dense form, intended for desk-scale
/// checks and the class-coefficient operations.
struct RemlScoreParts {
  std::vector<MatrixXd> B;  // s+1 symmetric N x N matrices
  VectorXd b;               // s+1 scalars, b_j = E(u' B_j u)
};

/// Full-likelihood analogue: C_0 = V^{-1}/(2 lambda),
/// C_j = (lambda/2) V^{-1} Z_j Z_j' V^{-1}, c_0 = N/(2 lambda),
/// c_j = (lambda/2) tr(V^{-1} Z_j Z_j'), and q_j = V^{-1} X_j.
struct MlScoreParts {
  std::vector<MatrixXd> C;
  VectorXd c;
  MatrixXd q;  // N x p, column j = V^{-1} X_j
};

/// Linear-algebra route for likelihood evaluation. Both routes compute
/// identical quantities (to floating-point noise):
///  - dense: Cholesky of the N x N matrix W = I + sum gamma_t Z_t Z_t'
///  - reduced: Cholesky of the q x q matrix G^{-1} + Z'Z (q = sum m_t),
///    through the Woodbury identity; preferable when q << N.
/// `automatic` picks reduced when q is well below N.
enum class Backend { automatic, dense, reduced };

struct FitOptions {
  double gradient_tol = 1e-8;  // infinity norm, log-scale gradient
  int max_iterations = 200;
  double gamma_floor = 1e-8;   // soft lower bound on each gamma
  // Default multi-start set: moment-based, all-gamma 0.5, all-gamma 2.
  // Non-empty `starts` replaces the default set.
  bool multistart = true;
  std::vector<VarianceComponents> starts;
  Backend backend = Backend::automatic;
};

struct FitResult {
  VarianceComponents theta_hat;
  FixedEffects beta_hat;  // GLS at theta_hat (REML) or ML estimate
  double loglik = 0.0;
  bool converged = false;
  std::vector<bool> boundary;  // per gamma component
  int iterations = 0;
};

/// Precomputed design-level quantities (Gram matrices, concatenated
/// random design) shared across likelihood evaluations and replicates.
/// Holds a pointer to the model; the model must outlive the context.
class DesignContext {
 public:
  explicit DesignContext(const ModelSpec& model);

  const ModelSpec& model() const { return *model_; }
  int n_obs() const { return N_; }
  int n_fixed() const { return p_; }
  int n_terms() const { return s_; }
  int total_random_cols() const { return q_; }
  int term_offset(int t) const { return offsets_[t]; }
  int term_cols(int t) const { return cols_[t]; }

  const MatrixXd& Zall() const { return Zall_; }
  const MatrixXd& ZtZ() const { return ZtZ_; }
  const MatrixXd& XtZ() const { return XtZ_; }
  const MatrixXd& XtX() const { return XtX_; }

 private:
  const ModelSpec* model_;
  int N_, p_, s_, q_;
  std::vector<int> offsets_, cols_;
  MatrixXd Zall_;  // N x q, random design columns side by side
  MatrixXd ZtZ_, XtZ_, XtX_;
};

/// Per-dataset Gram vectors for a response sharing the context's design.
struct DataContext {
  DataContext(const DesignContext& ctx, const VectorXd& y);
  const VectorXd* y;
  VectorXd Zty;  // q
  VectorXd Xty;  // p
  double yty;
};

// --- quasi-restricted likelihood -----------------------------------------

/// -1/2 { log|V| + log|X'V^{-1}X| + y'Py } with additive constant 0.
double reml_loglik(const VarianceComponents& theta, const ModelSpec& model,
                   Backend backend = Backend::automatic);

/// Component j equals u'B_j u - b_j (u = y works since P X = 0).
VectorXd reml_score(const VarianceComponents& theta, const ModelSpec& model,
                    Backend backend = Backend::automatic);

/// Entries -(N-p)/(2 lambda^2), -(1/2) tr(P Z_j Z_j'),
/// -(lambda^2/2) tr(P Z_j Z_j' P Z_k Z_k'); equals minus the Gaussian
/// information 2{tr(B_j V B_k V)}.
MatrixXd reml_expected_hessian(const VarianceComponents& theta,
                               const ModelSpec& model,
                               Backend backend = Backend::automatic);

// --- quasi-full likelihood ------------------------------------------------

double ml_loglik(const FixedEffects& beta, const VarianceComponents& theta,
                 const ModelSpec& model, Backend backend = Backend::automatic);

/// (p+s+1)-vector: X'V^{-1}u then u'C_j u - c_j for j = 0..s.
VectorXd ml_score(const FixedEffects& beta, const VarianceComponents& theta,
                  const ModelSpec& model, Backend backend = Backend::automatic);

/// Block diagonal: beta block -X'V^{-1}X, theta block -2{tr(C_j V C_k V)}.
MatrixXd ml_expected_hessian(const FixedEffects& beta,
                             const VarianceComponents& theta,
                             const ModelSpec& model,
                             Backend backend = Backend::automatic);

// --- dense score parts (class-coefficient inputs, oracles) ----------------

RemlScoreParts reml_score_parts(const VarianceComponents& theta,
                                const ModelSpec& model);
MlScoreParts ml_score_parts(const VarianceComponents& theta,
                            const ModelSpec& model);

// --- fitting ---------------------------------------------------------------

FitResult fit_reml(const ModelSpec& model, const FitOptions& options = {});
FitResult fit_ml(const ModelSpec& model, const FitOptions& options = {});

/// REML with a subset of theta coordinates pinned: key 0 pins lambda,
/// key t >= 1 pins gamma_t. Maximizes over the free coordinates only.
FitResult fit_reml_constrained(const ModelSpec& model,
                               const std::map<int, double>& fixed_components,
                               const FitOptions& options = {});

// Context-reusing variants for repeated fits on a shared design.
FitResult fit_reml(const DesignContext& ctx, const DataContext& data,
                   const FitOptions& options);
FitResult fit_ml(const DesignContext& ctx, const DataContext& data,
                 const FitOptions& options);
FitResult fit_reml_constrained(const DesignContext& ctx, const DataContext& data,
                               const std::map<int, double>& fixed_components,
                               const FitOptions& options);

}  // namespace poquim
