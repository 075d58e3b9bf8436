#include "poquim/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "poquim/exec.hpp"

namespace poquim {

// --- DistributionSpec --------------------------------------------------------

void DistributionSpec::validate() const {
  if (!(target_variance > 0.0)) {
    throw std::invalid_argument("distribution: target variance must be > 0");
  }
  if (family == Family::normal_mixture) {
    if (!(rho > 0.0) || !(rho < 1.0)) {
      throw std::invalid_argument("distribution: mixture rho must be in (0,1)");
    }
    const double m = (1.0 - rho) * mu1 + rho * mu2;
    const double d1 = mu1 - m, d2 = mu2 - m;
    const double var = (1.0 - rho) * (d1 * d1 + 1.0) + rho * (d2 * d2 + 1.0);
    if (!(var > 0.0)) {
      throw std::invalid_argument("distribution: degenerate mixture");
    }
  }
}

DistributionSpec DistributionSpec::parse(const std::string& name,
                                         double target_variance) {
  DistributionSpec spec;
  spec.target_variance = target_variance;
  if (name == "normal") {
    spec.family = Family::normal;
  } else if (name == "double-exponential" || name == "de") {
    spec.family = Family::double_exponential;
  } else if (name == "centered-exponential" || name == "ce") {
    spec.family = Family::centered_exponential;
  } else if (name.rfind("normal-mixture", 0) == 0 || name.rfind("nm", 0) == 0) {
    spec.family = Family::normal_mixture;
    const auto open = name.find('(');
    const auto close = name.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open) {
      throw std::invalid_argument("distribution: expected nm(mu1,mu2,rho)");
    }
    const std::string args = name.substr(open + 1, close - open - 1);
    if (std::sscanf(args.c_str(), "%lf,%lf,%lf", &spec.mu1, &spec.mu2,
                    &spec.rho) != 3) {
      throw std::invalid_argument("distribution: expected nm(mu1,mu2,rho)");
    }
  } else {
    throw std::invalid_argument("distribution: unknown family '" + name + "'");
  }
  spec.validate();
  return spec;
}

std::string DistributionSpec::name() const {
  switch (family) {
    case Family::normal: return "normal";
    case Family::double_exponential: return "double-exponential";
    case Family::centered_exponential: return "centered-exponential";
    case Family::normal_mixture: {
      char buf[96];
      std::snprintf(buf, sizeof buf, "normal-mixture(%g,%g,%g)", mu1, mu2, rho);
      return buf;
    }
  }
  return "?";
}

double draw(const DistributionSpec& spec, Rng& rng) {
  const double sigma = std::sqrt(spec.target_variance);
  switch (spec.family) {
    case DistributionSpec::Family::normal:
      return sigma * rng.normal();
    case DistributionSpec::Family::double_exponential: {
      // Unit-variance Laplace via the inverse CDF (rate sqrt(2)).
      const double u = rng.uniform();
      const double x = u < 0.5 ? std::log(2.0 * u) : -std::log(2.0 * (1.0 - u));
      return sigma * x / std::sqrt(2.0);
    }
    case DistributionSpec::Family::centered_exponential:
      return sigma * (rng.exponential() - 1.0);
    case DistributionSpec::Family::normal_mixture: {
      const double m = (1.0 - spec.rho) * spec.mu1 + spec.rho * spec.mu2;
      const double d1 = spec.mu1 - m, d2 = spec.mu2 - m;
      const double var =
          (1.0 - spec.rho) * (d1 * d1 + 1.0) + spec.rho * (d2 * d2 + 1.0);
      const double mu = rng.uniform() < spec.rho ? spec.mu2 : spec.mu1;
      const double x = rng.normal() + mu;
      return sigma * (x - m) / std::sqrt(var);
    }
  }
  throw std::logic_error("draw: unreachable");
}

namespace oracle {

void HigherMoments::validate() const {
  const auto n = sigma2.size();
  if (third.size() != n || kappa.size() != n) {
    throw std::invalid_argument("moments: vector length mismatch");
  }
  for (int t = 0; t < n; ++t) {
    if (!(sigma2[t] >= 0.0)) {
      throw std::invalid_argument("moments: negative variance");
    }
    if (kappa[t] < -2.0 * sigma2[t] * sigma2[t] - 1e-12) {
      throw std::invalid_argument("moments: kurtosis below the feasibility bound");
    }
  }
}

MomentEntry distribution_moments(const DistributionSpec& spec) {
  spec.validate();
  const double s2 = spec.target_variance;
  MomentEntry out;
  out.sigma2 = s2;
  switch (spec.family) {
    case DistributionSpec::Family::normal:
      out.third = 0.0;
      out.kappa = 0.0;
      break;
    case DistributionSpec::Family::double_exponential:
      // Unit-variance Laplace has fourth moment 6.
      out.third = 0.0;
      out.kappa = 3.0 * s2 * s2;
      break;
    case DistributionSpec::Family::centered_exponential:
      // Exp(1) - 1 has central moments mu3 = 2, mu4 = 9.
      out.third = 2.0 * std::pow(s2, 1.5);
      out.kappa = 6.0 * s2 * s2;
      break;
    case DistributionSpec::Family::normal_mixture: {
      const double m = (1.0 - spec.rho) * spec.mu1 + spec.rho * spec.mu2;
      const double d1 = spec.mu1 - m, d2 = spec.mu2 - m;
      const double w1 = 1.0 - spec.rho, w2 = spec.rho;
      const double v = w1 * (d1 * d1 + 1.0) + w2 * (d2 * d2 + 1.0);
      const double m3 = w1 * (d1 * d1 * d1 + 3.0 * d1) + w2 * (d2 * d2 * d2 + 3.0 * d2);
      const double m4 = w1 * (std::pow(d1, 4) + 6.0 * d1 * d1 + 3.0) +
                        w2 * (std::pow(d2, 4) + 6.0 * d2 * d2 + 3.0);
      const double c = std::sqrt(s2 / v);
      out.third = c * c * c * m3;
      out.kappa = c * c * c * c * (m4 - 3.0 * v * v);
      break;
    }
  }
  return out;
}

HigherMoments model_moments(const VarianceComponents& theta,
                            const DistributionSpec& error_spec,
                            const std::vector<DistributionSpec>& effect_specs) {
  const int s = static_cast<int>(effect_specs.size());
  HigherMoments hm;
  hm.sigma2.resize(s + 1);
  hm.third.resize(s + 1);
  hm.kappa.resize(s + 1);
  DistributionSpec err = error_spec;
  err.target_variance = theta.lambda;
  const MomentEntry e0 = distribution_moments(err);
  hm.sigma2[0] = e0.sigma2;
  hm.third[0] = e0.third;
  hm.kappa[0] = e0.kappa;
  for (int t = 0; t < s; ++t) {
    const double v = theta.lambda * theta.gamma[t];
    if (v == 0.0) {
      hm.sigma2[t + 1] = hm.third[t + 1] = hm.kappa[t + 1] = 0.0;
      continue;
    }
    DistributionSpec spec = effect_specs[t];
    spec.target_variance = v;
    const MomentEntry e = distribution_moments(spec);
    hm.sigma2[t + 1] = e.sigma2;
    hm.third[t + 1] = e.third;
    hm.kappa[t + 1] = e.kappa;
  }
  return hm;
}

namespace {

// Dense first-principles construction of V, P and the score matrices.
struct DenseParts {
  MatrixXd V;
  MatrixXd P;
  std::vector<MatrixXd> B;   // restricted-score forms
  std::vector<MatrixXd> C;   // full-score forms
  MatrixXd Vi;
  MatrixXd q;                // V^{-1} X
  VectorXd b, c;
};

DenseParts build_parts(const VarianceComponents& theta, const ModelSpec& model) {
  const int N = model.n_obs();
  const int p = model.n_fixed();
  const int s = model.n_random_terms();
  const double lambda = theta.lambda;
  DenseParts parts;
  parts.V = MatrixXd::Identity(N, N);
  for (int t = 0; t < s; ++t) {
    if (theta.gamma[t] != 0.0) {
      parts.V += theta.gamma[t] * (model.Z[t] * model.Z[t].transpose());
    }
  }
  parts.V *= lambda;
  parts.Vi = parts.V.inverse();
  const MatrixXd ViX = parts.Vi * model.X;
  parts.P = parts.Vi - ViX * (model.X.transpose() * ViX).inverse() * ViX.transpose();
  parts.P = 0.5 * (parts.P + parts.P.transpose()).eval();
  parts.q = ViX;

  parts.B.resize(s + 1);
  parts.C.resize(s + 1);
  parts.b.resize(s + 1);
  parts.c.resize(s + 1);
  parts.B[0] = parts.P / (2.0 * lambda);
  parts.C[0] = parts.Vi / (2.0 * lambda);
  parts.b[0] = (N - p) / (2.0 * lambda);
  parts.c[0] = N / (2.0 * lambda);
  for (int t = 0; t < s; ++t) {
    const MatrixXd PZ = parts.P * model.Z[t];
    const MatrixXd VZ = parts.Vi * model.Z[t];
    parts.B[t + 1] = (lambda / 2.0) * (PZ * PZ.transpose());
    parts.C[t + 1] = (lambda / 2.0) * (VZ * VZ.transpose());
    parts.b[t + 1] = (lambda / 2.0) * (PZ.transpose() * model.Z[t]).trace();
    parts.c[t + 1] = (lambda / 2.0) * (VZ.transpose() * model.Z[t]).trace();
  }
  return parts;
}

// Column-sum kurtosis term: sum_t kappa_t sum_l (z_tl' F_j z_tl)(z_tl' F_k z_tl).
MatrixXd kurtosis_term(const std::vector<MatrixXd>& F,
                       const HigherMoments& moments, const ModelSpec& model) {
  const int nf = static_cast<int>(F.size());
  const int s = model.n_random_terms();
  const int N = model.n_obs();
  MatrixXd out = MatrixXd::Zero(nf, nf);
  for (int t = 0; t <= s; ++t) {
    if (moments.kappa[t] == 0.0) continue;
    const int m = t == 0 ? N : static_cast<int>(model.Z[t - 1].cols());
    for (int l = 0; l < m; ++l) {
      VectorXd w(nf);
      if (t == 0) {
        for (int j = 0; j < nf; ++j) w[j] = F[j](l, l);
      } else {
        const VectorXd z = model.Z[t - 1].col(l);
        for (int j = 0; j < nf; ++j) w[j] = z.dot(F[j] * z);
      }
      out += moments.kappa[t] * (w * w.transpose());
    }
  }
  return out;
}

}  // namespace

MatrixXd analytic_quim_reml(const VarianceComponents& theta,
                            const HigherMoments& moments,
                            const ModelSpec& model) {
  moments.validate();
  const int s = model.n_random_terms();
  const DenseParts parts = build_parts(theta, model);
  MatrixXd out(s + 1, s + 1);
  for (int j = 0; j <= s; ++j) {
    const MatrixXd BjV = parts.B[j] * parts.V;
    for (int k = j; k <= s; ++k) {
      const MatrixXd BkV = parts.B[k] * parts.V;
      out(j, k) = out(k, j) = 2.0 * (BjV * BkV).trace();
    }
  }
  out += kurtosis_term(parts.B, moments, model);
  return out;
}

MatrixXd analytic_quim_ml(const VarianceComponents& theta,
                          const FixedEffects& beta,
                          const HigherMoments& moments, const ModelSpec& model) {
  (void)beta;  // the score variance at the truth does not involve beta
  moments.validate();
  const int s = model.n_random_terms();
  const int p = model.n_fixed();
  const int N = model.n_obs();
  const DenseParts parts = build_parts(theta, model);
  MatrixXd out = MatrixXd::Zero(p + s + 1, p + s + 1);

  out.topLeftCorner(p, p) = model.X.transpose() * parts.q;

  // Third-moment cross block: sum_t E(a^3) sum_l (X_j'V^{-1}z_tl)(z_tl'C_k z_tl).
  for (int t = 0; t <= s; ++t) {
    if (moments.third[t] == 0.0) continue;
    const int m = t == 0 ? N : static_cast<int>(model.Z[t - 1].cols());
    for (int l = 0; l < m; ++l) {
      VectorXd xv(p), cv(s + 1);
      if (t == 0) {
        for (int j = 0; j < p; ++j) xv[j] = parts.q(l, j);
        for (int k = 0; k <= s; ++k) cv[k] = parts.C[k](l, l);
      } else {
        const VectorXd z = model.Z[t - 1].col(l);
        xv = parts.q.transpose() * z;
        for (int k = 0; k <= s; ++k) cv[k] = z.dot(parts.C[k] * z);
      }
      out.block(0, p, p, s + 1) += moments.third[t] * (xv * cv.transpose());
    }
  }
  out.block(p, 0, s + 1, p) = out.block(0, p, p, s + 1).transpose();

  MatrixXd tt(s + 1, s + 1);
  for (int j = 0; j <= s; ++j) {
    const MatrixXd CjV = parts.C[j] * parts.V;
    for (int k = j; k <= s; ++k) {
      const MatrixXd CkV = parts.C[k] * parts.V;
      tt(j, k) = tt(k, j) = 2.0 * (CjV * CkV).trace();
    }
  }
  tt += kurtosis_term(parts.C, moments, model);
  out.bottomRightCorner(s + 1, s + 1) = tt;
  return out;
}

GeneratorSpec make_generator(const VarianceComponents& theta,
                             const DistributionSpec& error_family,
                             const std::vector<DistributionSpec>& effect_families) {
  const int s = static_cast<int>(effect_families.size());
  if (theta.gamma.size() != s) {
    throw std::invalid_argument("make_generator: term count mismatch");
  }
  GeneratorSpec gen;
  gen.error = error_family;
  gen.error.target_variance = theta.lambda;
  gen.effects = effect_families;
  for (int t = 0; t < s; ++t) {
    gen.effects[t].target_variance = theta.lambda * theta.gamma[t];
  }
  return gen;
}

McScoreVariance mc_score_variance(const VarianceComponents& theta,
                                  const FixedEffects& beta,
                                  const ModelSpec& model,
                                  const GeneratorSpec& generator, int reps,
                                  std::uint64_t seed, ScoreKind kind) {
  (void)beta;  // scores are functions of the centered residual vector
  if (reps < 1000) {
    throw std::invalid_argument("mc_score_variance: need at least 1000 replicates");
  }
  const int N = model.n_obs();
  const int s = model.n_random_terms();
  const int p = model.n_fixed();
  const DenseParts parts = build_parts(theta, model);
  const int dim = kind == ScoreKind::reml ? s + 1 : p + s + 1;

  MatrixXd scores(reps, dim);
  const bool par = default_exec() == Exec::parallel;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#else
  (void)par;
#endif
  for (int r = 0; r < reps; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    VectorXd u = VectorXd::Zero(N);
    for (int t = 0; t < s; ++t) {
      if (generator.effects[t].target_variance == 0.0) continue;
      VectorXd alpha(model.Z[t].cols());
      for (int l = 0; l < alpha.size(); ++l) alpha[l] = draw(generator.effects[t], rng);
      u += model.Z[t] * alpha;
    }
    for (int i = 0; i < N; ++i) u[i] += draw(generator.error, rng);

    if (kind == ScoreKind::reml) {
      for (int j = 0; j <= s; ++j) {
        scores(r, j) = u.dot(parts.B[j] * u) - parts.b[j];
      }
    } else {
      scores.row(r).head(p) = (parts.q.transpose() * u).transpose();
      for (int j = 0; j <= s; ++j) {
        scores(r, p + j) = u.dot(parts.C[j] * u) - parts.c[j];
      }
    }
  }

  McScoreVariance out;
  out.replicates = reps;
  const Eigen::RowVectorXd mean = scores.colwise().mean();
  const MatrixXd centered = scores.rowwise() - mean;
  out.covariance = (centered.transpose() * centered) / (reps - 1);
  out.mean_score = mean;

  // Batch-means standard errors for each covariance entry.
  const int n_batches = std::min(100, reps / 10);
  const int batch = reps / n_batches;
  MatrixXd sum = MatrixXd::Zero(dim, dim);
  MatrixXd sumsq = MatrixXd::Zero(dim, dim);
  for (int b = 0; b < n_batches; ++b) {
    const MatrixXd part = centered.middleRows(b * batch, batch);
    const MatrixXd cb = (part.transpose() * part) / (batch - 1);
    sum += cb;
    sumsq += cb.cwiseProduct(cb);
  }
  const MatrixXd var_b =
      (sumsq - sum.cwiseProduct(sum) / n_batches) / (n_batches - 1);
  out.standard_error =
      (var_b.cwiseMax(0.0) / n_batches).cwiseSqrt();
  return out;
}

}  // namespace oracle
}  // namespace poquim
