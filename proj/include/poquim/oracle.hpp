#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "poquim/distributions.hpp"
#include "poquim/model.hpp"

namespace poquim::oracle {

// Ground-truth computations kept independent of the main assembly paths:
// everything here is built from first principles (explicit dense V, P and
// matrix products), so agreement with the production modules is a real
// cross-check rather than a tautology.

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Exact higher moments of the random effects and errors, error term
/// first: sigma2_t, E(alpha_t^3), and the kurtosis E(alpha_t^4) - 3 sigma_t^4.
struct HigherMoments {
  VectorXd sigma2;
  VectorXd third;
  VectorXd kappa;

  void validate() const;
};

struct MomentEntry {
  double sigma2 = 0.0;
  double third = 0.0;
  double kappa = 0.0;
};

/// Exact centered moments of a supported law scaled to its target variance.
MomentEntry distribution_moments(const DistributionSpec& spec);

/// Moments for a full model: error law plus one law per random term, with
/// variances lambda and lambda * gamma_t.
HigherMoments model_moments(const VarianceComponents& theta,
                            const DistributionSpec& error_spec,
                            const std::vector<DistributionSpec>& effect_specs);

/// Exact Var(restricted score) under the given moments, by the
/// column-sum form: 2 tr(B_j V B_k V) + sum_t kappa_t sum_l
/// (z_tl' B_j z_tl)(z_tl' B_k z_tl), with dense matrix products.
MatrixXd analytic_quim_reml(const VarianceComponents& theta,
                            const HigherMoments& moments,
                            const ModelSpec& model);

/// Exact Var(full score) over (beta, theta): beta block X'V^{-1}X,
/// beta-theta block from the third moments, theta block as above with C.
MatrixXd analytic_quim_ml(const VarianceComponents& theta,
                          const FixedEffects& beta,
                          const HigherMoments& moments,
                          const ModelSpec& model);

struct GeneratorSpec {
  DistributionSpec error;
  std::vector<DistributionSpec> effects;  // one per random term
};

/// Build the generator matching theta (variances lambda, lambda*gamma_t).
GeneratorSpec make_generator(const VarianceComponents& theta,
                             const DistributionSpec& error_family,
                             const std::vector<DistributionSpec>& effect_families);

enum class ScoreKind { reml, ml };

struct McScoreVariance {
  MatrixXd covariance;
  MatrixXd standard_error;  // per entry, from batch means
  MatrixXd mean_score;      // 1 x dim row of the score average
  int replicates = 0;
};

/// Sample covariance of the quasi-score over simulated datasets at the
/// given truth. Scores are evaluated through the quadratic-form pieces
/// built here, not through the production engine. Replicate streams
/// derive from (seed, index), so results are scheduling-independent.
McScoreVariance mc_score_variance(const VarianceComponents& theta,
                                  const FixedEffects& beta,
                                  const ModelSpec& model,
                                  const GeneratorSpec& generator, int reps,
                                  std::uint64_t seed,
                                  ScoreKind kind = ScoreKind::reml);

}  // namespace poquim::oracle
