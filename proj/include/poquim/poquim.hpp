#pragma once

#include <Eigen/Dense>

#include "poquim/exec.hpp"
#include "poquim/index_classes.hpp"
#include "poquim/likelihood.hpp"
#include "poquim/model.hpp"

namespace poquim {

/// Split of the estimated quasi-information matrix into its observed part
/// (class-averaged residual moment sums) and estimated part (functions of
/// theta only), together with the expected-Hessian form. Dimension is
/// s+1 for the restricted likelihood, p+s+1 for the full likelihood.
struct QuimDecomposition {
  MatrixXd observed;
  MatrixXd estimated;
  MatrixXd total;  // observed + estimated
  MatrixXd i2;     // expected Hessian (negative definite when identifiable)
  int dimension = 0;
  bool is_ml = false;
};

/// Sandwich estimate of the asymptotic covariance matrix.
struct AcmEstimate {
  MatrixXd sigma;
  enum class Source { reml, ml } source = Source::reml;
};

struct PoquimOptions {
  Backend backend = Backend::automatic;
  Exec exec = Exec::parallel;
  ClassifyOptions classify;
};

/// Restricted-likelihood estimator of Var(score): observed part sums
/// c_{j,k}(i1..i4) u_{i1}...u_{i4} over the nonzero index classes; the
/// estimated part is the Gaussian information minus
/// 3 lambda^2 sum c_{j,k} Gamma(i1,i3) Gamma(i2,i4) over the same tuples.
QuimDecomposition poquim_reml(const VarianceComponents& theta,
                              const FixedEffects& beta, const ModelSpec& model,
                              const PoquimOptions& options = {});

/// Full-likelihood analogue: the beta block is purely estimated
/// (X'V^{-1}X), the beta-theta block purely observed (third-order sums),
/// and the theta block decomposes like the restricted case.
QuimDecomposition poquim_ml(const VarianceComponents& theta,
                            const FixedEffects& beta, const ModelSpec& model,
                            const PoquimOptions& options = {});

/// Sigma = I2^{-1} I1 I2^{-1}, symmetrized. Eigenvalues below the PSD
/// tolerance raise a std::runtime_error rather than being clipped.
AcmEstimate acm(const QuimDecomposition& decomp);

// Partition-reusing variants for repeated evaluation on one design.
QuimDecomposition poquim_reml(const DesignContext& ctx, const DataContext& data,
                              const IndexClassPartition& quadruples,
                              const VarianceComponents& theta,
                              const FixedEffects& beta,
                              const PoquimOptions& options = {});
QuimDecomposition poquim_ml(const DesignContext& ctx, const DataContext& data,
                            const IndexClassPartition& triples,
                            const IndexClassPartition& quadruples,
                            const VarianceComponents& theta,
                            const FixedEffects& beta,
                            const PoquimOptions& options = {});

}  // namespace poquim
