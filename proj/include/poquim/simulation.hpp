#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poquim/distributions.hpp"
#include "poquim/exec.hpp"
#include "poquim/inference.hpp"
#include "poquim/likelihood.hpp"
#include "poquim/model.hpp"

namespace poquim {

struct DesignSpec {
  enum class Type { one_way, two_way, custom };
  Type type = Type::one_way;
  int m = 0;  // groups / first factor levels
  int n = 0;  // group size / second factor levels
  ModelSpec custom;  // design only; y is ignored

  void validate() const;
};

/// X and Z matrices for the design (response left zero).
ModelSpec build_design(const DesignSpec& spec);

enum class TestMethod { poquim_chi2, jackknife_t };
std::string method_name(TestMethod m);

/// One Monte Carlo scenario: a design, a truth point, generator laws per
/// term, the hypothesis under test, and the tally grid.
struct StudyConfig {
  std::string name;
  DesignSpec design;
  VectorXd beta_truth;
  double lambda_truth = 1.0;
  VectorXd gamma_truth;
  DistributionSpec error_dist;                 // family; variance from truth
  std::vector<DistributionSpec> effect_dists;  // one per random term
  Hypothesis hypothesis;
  /// Substitute components fully specified by the hypothesis (single-
  /// nonzero K columns) into the sandwich, re-estimating the free ones
  /// under the constraint. The contrast-only case substitutes nothing.
  bool null_substitution = true;
  std::vector<TestMethod> methods{TestMethod::poquim_chi2};
  std::vector<double> nominal_levels{0.01, 0.05, 0.10};
  int replicates = 2000;
  std::uint64_t master_seed = 1;
  FitOptions fit;

  void validate() const;
};

struct MethodLevelTally {
  int rejected = 0;
  int tested = 0;
  double fraction() const { return tested > 0 ? double(rejected) / tested : 0.0; }
  /// Binomial standard error of the rejection fraction.
  double standard_error() const;
};

struct StudyResult {
  std::vector<TestMethod> methods;
  std::vector<double> levels;
  /// tallies[method][level]
  std::vector<std::vector<MethodLevelTally>> tallies;
  int replicates = 0;
  int fit_failures = 0;      // non-convergence
  int boundary_hits = 0;     // gamma estimated on the boundary
  int test_errors = 0;       // numerical failure in the sandwich / test
  int jackknife_errors = 0;  // non-positive mean squares
  double elapsed_seconds = 0.0;  // in-memory diagnostic, not serialized
};

/// Dataset for one replicate: the design plus a simulated response drawn
/// from the configured laws; deterministic in (master_seed, replicate).
ModelSpec simulate_dataset(const StudyConfig& config, int replicate_index);

/// Fit, test and tally over all replicates. Replicates run concurrently
/// under the parallel policy; per-replicate outcomes land in slots indexed
/// by replicate, so the tally is identical for any thread count.
StudyResult run_study(const StudyConfig& config, Exec exec = default_exec());

/// Monte Carlo check of the observed/estimated split: with theta and beta
/// pinned at the truth, the replicate mean of the assembled estimator
/// should match the exact score variance under the generator's moments.
/// Reports per-entry z = (mc_mean - analytic) / se.
struct PoquimMeanCheck {
  MatrixXd mc_mean;
  MatrixXd se;        // standard error of the replicate mean
  MatrixXd analytic;
  MatrixXd z;
  int replicates = 0;
};
PoquimMeanCheck poquim_mean_check(const VarianceComponents& theta,
                                  const FixedEffects& beta_truth,
                                  const ModelSpec& design_model,
                                  const DistributionSpec& error_family,
                                  const std::vector<DistributionSpec>& effect_families,
                                  int replicates, std::uint64_t seed,
                                  bool ml, Exec exec = default_exec());

}  // namespace poquim
