#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <vector>

#include "poquim/model.hpp"
#include "poquim/rng.hpp"

// Shared helpers for the test suites: small-model generators and dense
// brute-force oracles that recompute everything from definitions. Nothing
// here calls the production assembly paths.

namespace poquim::test {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// --- model generators ---------------------------------------------------

ModelSpec oneway_model(int m, int n, Rng& rng);
ModelSpec twoway_model(int m, int n, Rng& rng);
/// Unbalanced nested design with covariates: group sizes n_i in
/// [1, max_n], X = [1, x1] with random x1.
ModelSpec nested_model(const std::vector<int>& group_sizes, int p, Rng& rng);
/// Paired intercept/slope design: two observations per subject, the
/// second carrying a real loading t_i on the slope term.
ModelSpec intercept_slope_model(int m, Rng& rng);
/// Generic random model with 0/1 or real-valued designs.
ModelSpec random_model(int N, int s, int p, bool real_loadings, Rng& rng);

VarianceComponents random_theta(int s, Rng& rng);

// --- brute-force index classes -------------------------------------------

struct BruteClass {
  VectorXd key;                 // s+1 coefficients
  long long ordered_count = 0;  // ordered tuples
  double u_sum = 0.0;           // sum of residual products (if u given)
  double gamma_sum = 0.0;       // sum Gamma(i1,i3) Gamma(i2,i4), order 4 only
  std::vector<double> pair_sums;  // per packed (j,k): sum F_j F_k products
};

/// Exhaustive O(N^order) classification by quantized key, plus the same
/// per-class sums the sparse sweep produces. `forms` are dense symmetric
/// matrices; `vecs` only applies to order 3 (columns paired with forms).
std::vector<BruteClass> brute_force_classes(
    const ModelSpec& model, int order, const std::vector<MatrixXd>& forms,
    const VectorXd* u, bool with_gamma, const VarianceComponents* theta,
    const MatrixXd* vecs = nullptr);

/// Gamma(i1,i2) = sum_t gamma_t z_{i1 t} . z_{i2 t} with gamma_0 = 1.
MatrixXd gamma_kernel(const VarianceComponents& theta, const ModelSpec& model);

// --- restricted likelihood via an explicit contrast basis ----------------

/// log-likelihood of T'y where T spans the null space of X'; equals the
/// production value up to a theta-free constant.
double explicit_contrast_reml(const VarianceComponents& theta,
                              const ModelSpec& model);

/// P = T (T' V T)^{-1} T' built from the explicit basis (no constant
/// ambiguity; matches the production projection entrywise).
MatrixXd explicit_contrast_projection(const VarianceComponents& theta,
                                      const ModelSpec& model);

// --- numerical differentiation -------------------------------------------

/// Central finite differences of f over the coordinates of theta.
VectorXd finite_difference_gradient(
    const std::function<double(const VectorXd&)>& f, const VectorXd& at,
    double step = 1e-5);

inline double rel_err(double got, double want) {
  return std::fabs(got - want) / std::max(1.0, std::fabs(want));
}

inline double max_rel_err(const MatrixXd& got, const MatrixXd& want) {
  const double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

}  // namespace poquim::test
