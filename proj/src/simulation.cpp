#include "poquim/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "poquim/index_classes.hpp"
#include "poquim/oracle.hpp"
#include "poquim/poquim.hpp"

namespace poquim {

void DesignSpec::validate() const {
  switch (type) {
    case Type::one_way:
      if (m < 2 || n < 2) {
        throw std::invalid_argument("design: one-way needs m >= 2, n >= 2");
      }
      break;
    case Type::two_way:
      if (m < 2 || n < 2) {
        throw std::invalid_argument("design: two-way needs m >= 2, n >= 2");
      }
      break;
    case Type::custom:
      custom.validate();
      break;
  }
}

ModelSpec build_design(const DesignSpec& spec) {
  spec.validate();
  if (spec.type == DesignSpec::Type::custom) {
    ModelSpec model = spec.custom;
    model.y = VectorXd::Zero(model.X.rows());
    return model;
  }
  const int m = spec.m;
  const int n = spec.n;
  const int N = m * n;
  ModelSpec model;
  model.y = VectorXd::Zero(N);
  model.X = MatrixXd::Ones(N, 1);
  model.fixed_names = {"(intercept)"};
  if (spec.type == DesignSpec::Type::one_way) {
    MatrixXd Z1 = MatrixXd::Zero(N, m);
    for (int i = 0; i < m; ++i) Z1.block(i * n, i, n, 1).setOnes();
    model.Z.push_back(std::move(Z1));
    model.random_names = {"group"};
  } else {
    MatrixXd Z1 = MatrixXd::Zero(N, m);
    MatrixXd Z2 = MatrixXd::Zero(N, n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        Z1(i * n + j, i) = 1.0;
        Z2(i * n + j, j) = 1.0;
      }
    }
    model.Z.push_back(std::move(Z1));
    model.Z.push_back(std::move(Z2));
    model.random_names = {"rows", "cols"};
  }
  return model;
}

std::string method_name(TestMethod m) {
  return m == TestMethod::poquim_chi2 ? "POQUIM-chi2" : "jackknife-t";
}

double MethodLevelTally::standard_error() const {
  if (tested <= 0) return 0.0;
  const double f = fraction();
  return std::sqrt(f * (1.0 - f) / tested);
}

void StudyConfig::validate() const {
  design.validate();
  if (replicates < 1) throw std::invalid_argument("study: replicates >= 1");
  if (!(lambda_truth > 0.0)) throw std::invalid_argument("study: lambda > 0");
  for (double a : nominal_levels) {
    if (!(a > 0.0 && a < 1.0)) {
      throw std::invalid_argument("study: nominal levels must lie in (0,1)");
    }
  }
  const ModelSpec design_model = build_design(design);
  const int s = design_model.n_random_terms();
  if (gamma_truth.size() != s) {
    throw std::invalid_argument("study: gamma truth length mismatch");
  }
  if (static_cast<int>(effect_dists.size()) != s) {
    throw std::invalid_argument("study: one effect distribution per term");
  }
  if (beta_truth.size() != design_model.n_fixed()) {
    throw std::invalid_argument("study: beta truth length mismatch");
  }
  hypothesis.validate(s + 1);
  for (TestMethod m : methods) {
    if (m == TestMethod::jackknife_t &&
        design.type != DesignSpec::Type::one_way) {
      throw std::invalid_argument(
          "study: the delete-group jackknife applies only to the balanced "
          "one-way design");
    }
  }
  if (methods.empty()) throw std::invalid_argument("study: no methods");
}

namespace {

// Draw order is fixed: each term's effects, then the errors.
VectorXd simulate_response(const StudyConfig& config, const ModelSpec& design,
                           int replicate_index) {
  const int N = design.n_obs();
  const int s = design.n_random_terms();
  Rng rng(config.master_seed, static_cast<std::uint64_t>(replicate_index));
  VectorXd y = design.X * config.beta_truth;
  for (int t = 0; t < s; ++t) {
    const double var_t = config.lambda_truth * config.gamma_truth[t];
    if (var_t == 0.0) continue;
    DistributionSpec spec = config.effect_dists[t];
    spec.target_variance = var_t;
    VectorXd alpha(design.Z[t].cols());
    for (int l = 0; l < alpha.size(); ++l) alpha[l] = draw(spec, rng);
    y += design.Z[t] * alpha;
  }
  DistributionSpec err = config.error_dist;
  err.target_variance = config.lambda_truth;
  for (int i = 0; i < N; ++i) y[i] += draw(err, rng);
  return y;
}

// Components fully specified by the hypothesis: single-nonzero K columns.
std::map<int, double> pinned_components(const Hypothesis& h) {
  std::map<int, double> pins;
  for (int c = 0; c < h.K.cols(); ++c) {
    int nz = -1;
    bool single = true;
    for (int i = 0; i < h.K.rows(); ++i) {
      if (h.K(i, c) != 0.0) {
        if (nz >= 0) {
          single = false;
          break;
        }
        nz = i;
      }
    }
    if (single && nz >= 0) pins[nz] = h.phi[c] / h.K(nz, c);
  }
  return pins;
}

struct ReplicateOutcome {
  bool fit_failed = false;
  bool boundary = false;
  bool test_error = false;
  bool jackknife_error = false;
  // reject[method][level]
  std::vector<std::vector<bool>> reject;
  std::vector<bool> method_valid;
};

}  // namespace

ModelSpec simulate_dataset(const StudyConfig& config, int replicate_index) {
  config.validate();
  ModelSpec model = build_design(config.design);
  model.y = simulate_response(config, model, replicate_index);
  return model;
}

StudyResult run_study(const StudyConfig& config, Exec exec) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const ModelSpec design = build_design(config.design);
  const DesignContext ctx(design);
  const IndexClassPartition quadruples = classify_quadruples(design);
  const std::map<int, double> pins =
      config.null_substitution ? pinned_components(config.hypothesis)
                               : std::map<int, double>{};

  const int R = config.replicates;
  const int n_methods = static_cast<int>(config.methods.size());
  const int n_levels = static_cast<int>(config.nominal_levels.size());
  std::vector<ReplicateOutcome> outcomes(R);

  const bool use_jackknife =
      std::find(config.methods.begin(), config.methods.end(),
                TestMethod::jackknife_t) != config.methods.end();
  double jack_gamma0 = 0.0;
  if (use_jackknife) {
    const auto hpins = pinned_components(config.hypothesis);
    const auto it = hpins.find(1);
    if (it == hpins.end()) {
      throw std::invalid_argument(
          "study: jackknife requires a hypothesis pinning gamma_1");
    }
    jack_gamma0 = it->second;
  }

  [[maybe_unused]] const bool par = exec == Exec::parallel;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) if (par)
#endif
  for (int r = 0; r < R; ++r) {
    ReplicateOutcome& out = outcomes[r];
    out.reject.assign(n_methods, std::vector<bool>(n_levels, false));
    out.method_valid.assign(n_methods, false);
    const VectorXd y = simulate_response(config, design, r);
    const DataContext data(ctx, y);

    FitResult fit;
    bool poquim_ok = true;
    try {
      fit = fit_reml(ctx, data, config.fit);
      if (!fit.converged) {
        out.fit_failed = true;
        poquim_ok = false;
      } else {
        for (bool b : fit.boundary) {
          if (b) {
            out.boundary = true;
            poquim_ok = false;
          }
        }
      }
    } catch (const std::exception&) {
      out.fit_failed = true;
      poquim_ok = false;
    }

    TestResult chi2_result;
    if (poquim_ok) {
      try {
        VarianceComponents theta_used = fit.theta_hat;
        FixedEffects beta_used = fit.beta_hat;
        if (!pins.empty()) {
          const FitResult null_fit =
              fit_reml_constrained(ctx, data, pins, config.fit);
          theta_used = null_fit.theta_hat;
          beta_used = null_fit.beta_hat;
        }
        PoquimOptions popt;
        popt.backend = config.fit.backend;
        popt.exec = exec;
        const QuimDecomposition decomp =
            poquim_reml(ctx, data, quadruples, theta_used, beta_used, popt);
        const AcmEstimate sigma = acm(decomp);
        chi2_result = dispersion_test(fit, sigma, config.hypothesis,
                                      config.nominal_levels);
      } catch (const std::exception&) {
        out.test_error = true;
        poquim_ok = false;
      }
    }

    TestResult jack_result;
    bool jack_ok = false;
    if (use_jackknife) {
      try {
        OnewayData oneway;
        oneway.y = Eigen::Map<const MatrixXd>(y.data(), config.design.n,
                                              config.design.m)
                       .transpose();
        jack_result =
            jackknife_oneway_test(oneway, jack_gamma0, config.nominal_levels);
        jack_ok = true;
      } catch (const std::exception&) {
        out.jackknife_error = true;
      }
    }

    for (int mi = 0; mi < n_methods; ++mi) {
      const bool is_jack = config.methods[mi] == TestMethod::jackknife_t;
      const TestResult& res = is_jack ? jack_result : chi2_result;
      const bool valid = is_jack ? jack_ok : poquim_ok;
      out.method_valid[mi] = valid;
      if (!valid) continue;
      for (int li = 0; li < n_levels; ++li) {
        out.reject[mi][li] = res.reject_at.at(config.nominal_levels[li]);
      }
    }
  }

  StudyResult result;
  result.methods = config.methods;
  result.levels = config.nominal_levels;
  result.replicates = R;
  result.tallies.assign(n_methods, std::vector<MethodLevelTally>(n_levels));
  for (int r = 0; r < R; ++r) {
    const ReplicateOutcome& out = outcomes[r];
    result.fit_failures += out.fit_failed ? 1 : 0;
    result.boundary_hits += out.boundary ? 1 : 0;
    result.test_errors += out.test_error ? 1 : 0;
    result.jackknife_errors += out.jackknife_error ? 1 : 0;
    for (int mi = 0; mi < n_methods; ++mi) {
      if (!out.method_valid[mi]) continue;
      for (int li = 0; li < n_levels; ++li) {
        auto& tally = result.tallies[mi][li];
        tally.tested += 1;
        tally.rejected += out.reject[mi][li] ? 1 : 0;
      }
    }
  }
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

PoquimMeanCheck poquim_mean_check(const VarianceComponents& theta,
                                  const FixedEffects& beta_truth,
                                  const ModelSpec& design_model,
                                  const DistributionSpec& error_family,
                                  const std::vector<DistributionSpec>& effect_families,
                                  int replicates, std::uint64_t seed, bool ml,
                                  Exec exec) {
  if (replicates < 100) {
    throw std::invalid_argument("poquim_mean_check: need >= 100 replicates");
  }
  design_model.validate();
  const int N = design_model.n_obs();
  const int s = design_model.n_random_terms();
  const int dim = ml ? design_model.n_fixed() + s + 1 : s + 1;

  const DesignContext ctx(design_model);
  const IndexClassPartition quadruples = classify_quadruples(design_model);
  IndexClassPartition triples;
  if (ml) triples = classify_triples(design_model);
  const oracle::GeneratorSpec gen =
      oracle::make_generator(theta, error_family, effect_families);
  const oracle::HigherMoments moments =
      oracle::model_moments(theta, error_family, effect_families);

  std::vector<MatrixXd> totals(replicates);
  [[maybe_unused]] const bool par = exec == Exec::parallel;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) if (par)
#endif
  for (int r = 0; r < replicates; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    VectorXd y = design_model.X * beta_truth.beta;
    for (int t = 0; t < s; ++t) {
      if (gen.effects[t].target_variance == 0.0) continue;
      VectorXd alpha(design_model.Z[t].cols());
      for (int l = 0; l < alpha.size(); ++l) alpha[l] = draw(gen.effects[t], rng);
      y += design_model.Z[t] * alpha;
    }
    for (int i = 0; i < N; ++i) y[i] += draw(gen.error, rng);
    const DataContext data(ctx, y);
    PoquimOptions popt;
    popt.exec = Exec::serial;  // replicate level already parallel
    const QuimDecomposition decomp =
        ml ? poquim_ml(ctx, data, triples, quadruples, theta, beta_truth, popt)
           : poquim_reml(ctx, data, quadruples, theta, beta_truth, popt);
    totals[r] = decomp.total;
  }

  PoquimMeanCheck out;
  out.replicates = replicates;
  out.mc_mean = MatrixXd::Zero(dim, dim);
  for (const auto& t : totals) out.mc_mean += t;
  out.mc_mean /= replicates;
  MatrixXd var = MatrixXd::Zero(dim, dim);
  for (const auto& t : totals) {
    const MatrixXd d = t - out.mc_mean;
    var += d.cwiseProduct(d);
  }
  var /= (replicates - 1);
  out.se = (var / replicates).cwiseSqrt();
  out.analytic = ml ? oracle::analytic_quim_ml(theta, beta_truth, moments,
                                               design_model)
                    : oracle::analytic_quim_reml(theta, moments, design_model);
  out.z = (out.mc_mean - out.analytic)
              .cwiseQuotient(out.se.cwiseMax(1e-300));
  return out;
}

}  // namespace poquim
