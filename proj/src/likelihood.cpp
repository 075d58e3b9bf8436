#include "poquim/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "poquim/detail/engine.hpp"

namespace poquim {

using detail::Engine;

// --- public evaluation wrappers ---------------------------------------------

double reml_loglik(const VarianceComponents& theta, const ModelSpec& model,
                   Backend backend) {
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  return Engine(ctx, data, theta, backend).reml_loglik();
}

VectorXd reml_score(const VarianceComponents& theta, const ModelSpec& model,
                    Backend backend) {
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  return Engine(ctx, data, theta, backend).reml_score();
}

MatrixXd reml_expected_hessian(const VarianceComponents& theta,
                               const ModelSpec& model, Backend backend) {
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  return Engine(ctx, data, theta, backend).reml_expected_hessian();
}

double ml_loglik(const FixedEffects& beta, const VarianceComponents& theta,
                 const ModelSpec& model, Backend backend) {
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  return Engine(ctx, data, theta, backend).ml_loglik(beta.beta);
}

VectorXd ml_score(const FixedEffects& beta, const VarianceComponents& theta,
                  const ModelSpec& model, Backend backend) {
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  return Engine(ctx, data, theta, backend).ml_score(beta.beta);
}

MatrixXd ml_expected_hessian(const FixedEffects& beta,
                             const VarianceComponents& theta,
                             const ModelSpec& model, Backend backend) {
  (void)beta;  // the expected Hessian is free of beta
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  return Engine(ctx, data, theta, backend).ml_expected_hessian();
}

// --- dense score parts -------------------------------------------------------

RemlScoreParts reml_score_parts(const VarianceComponents& theta,
                                const ModelSpec& model) {
  const int N = model.n_obs();
  const int p = model.n_fixed();
  const int s = model.n_random_terms();
  const double lambda = theta.lambda;
  const MatrixXd P = build_projection(theta, model);
  RemlScoreParts parts;
  parts.B.resize(s + 1);
  parts.b.resize(s + 1);
  parts.B[0] = P / (2.0 * lambda);
  parts.b[0] = (N - p) / (2.0 * lambda);
  for (int t = 0; t < s; ++t) {
    const MatrixXd PZ = P * model.Z[t];
    parts.B[t + 1] = (lambda / 2.0) * (PZ * PZ.transpose());
    parts.b[t + 1] = (lambda / 2.0) * (PZ.transpose() * model.Z[t]).trace();
  }
  return parts;
}

MlScoreParts ml_score_parts(const VarianceComponents& theta,
                            const ModelSpec& model) {
  const int N = model.n_obs();
  const int s = model.n_random_terms();
  const double lambda = theta.lambda;
  const MatrixXd V = build_covariance(theta, model);
  Eigen::LLT<MatrixXd> llt(V);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("ml_score_parts: V not positive definite");
  }
  const MatrixXd Vi = llt.solve(MatrixXd::Identity(N, N));
  MlScoreParts parts;
  parts.C.resize(s + 1);
  parts.c.resize(s + 1);
  parts.C[0] = Vi / (2.0 * lambda);
  parts.c[0] = N / (2.0 * lambda);
  for (int t = 0; t < s; ++t) {
    const MatrixXd ViZ = Vi * model.Z[t];
    parts.C[t + 1] = (lambda / 2.0) * (ViZ * ViZ.transpose());
    parts.c[t + 1] = (lambda / 2.0) * (ViZ.transpose() * model.Z[t]).trace();
  }
  parts.q = Vi * model.X;
  return parts;
}

// --- optimizer ---------------------------------------------------------------

namespace {

struct Objective {
  std::function<double(Engine&)> loglik;
  std::function<VectorXd(Engine&)> score;   // length s+1
  std::function<MatrixXd(Engine&)> metric;  // -E[Hessian], s+1
};

struct OptRun {
  VectorXd theta;  // (lambda, gamma...) flat
  double loglik = -std::numeric_limits<double>::infinity();
  bool converged = false;
  std::vector<bool> boundary;
  int iterations = 0;
};

VarianceComponents theta_from_flat(const VectorXd& v) {
  return VarianceComponents::from_vector(v);
}

// Fisher scoring on (log lambda, log gamma) with backtracking line search.
// Gamma coordinates are floored; a floored coordinate whose score still
// points outward is declared a boundary case and refit at exactly 0.
OptRun optimize_theta(const DesignContext& ctx, const DataContext& data,
                      const VectorXd& start, const std::map<int, double>& pinned,
                      const FitOptions& options, const Objective& obj) {
  const int dim = static_cast<int>(start.size());
  const int s = dim - 1;
  const double floor_g = options.gamma_floor;

  OptRun run;
  run.boundary.assign(s, false);
  VectorXd v = start;
  std::vector<bool> is_free(dim, true);
  for (const auto& [idx, value] : pinned) {
    v[idx] = value;
    is_free[idx] = false;
  }
  for (int t = 1; t < dim; ++t) {
    if (is_free[t]) v[t] = std::max(v[t], floor_g);
  }

  auto make_engine = [&](const VectorXd& vv) {
    return Engine(ctx, data, theta_from_flat(vv), options.backend);
  };

  Engine eng = make_engine(v);
  double l = obj.loglik(eng);

  int iter = 0;
  while (iter < options.max_iterations) {
    const VectorXd g = obj.score(eng);

    // Boundary detection: gamma at the floor with outward-pointing score.
    bool dropped = false;
    for (int t = 1; t < dim; ++t) {
      if (is_free[t] && v[t] <= floor_g * (1.0 + 1e-9) && g[t] < 0.0) {
        v[t] = 0.0;
        is_free[t] = false;
        run.boundary[t - 1] = true;
        dropped = true;
      }
    }
    if (dropped) {
      eng = make_engine(v);
      l = obj.loglik(eng);
      ++iter;
      continue;
    }

    std::vector<int> free_idx;
    for (int i = 0; i < dim; ++i) {
      if (is_free[i]) free_idx.push_back(i);
    }
    const int nf = static_cast<int>(free_idx.size());
    if (nf == 0) {
      run.converged = true;
      break;
    }

    VectorXd g_log(nf);
    for (int i = 0; i < nf; ++i) g_log[i] = v[free_idx[i]] * g[free_idx[i]];
    if (g_log.cwiseAbs().maxCoeff() <= options.gradient_tol) {
      run.converged = true;
      break;
    }

    const MatrixXd H = obj.metric(eng);
    MatrixXd M(nf, nf);
    for (int i = 0; i < nf; ++i) {
      for (int j = 0; j < nf; ++j) {
        M(i, j) = v[free_idx[i]] * H(free_idx[i], free_idx[j]) * v[free_idx[j]];
      }
    }

    VectorXd d;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::LLT<MatrixXd> llt(M + ridge * MatrixXd::Identity(nf, nf));
      if (llt.info() == Eigen::Success) {
        d = llt.solve(g_log);
        break;
      }
      ridge = ridge == 0.0 ? 1e-8 * (1.0 + M.diagonal().cwiseAbs().maxCoeff())
                           : ridge * 100.0;
    }
    if (d.size() == 0 || d.dot(g_log) <= 0.0) d = g_log;  // ascent fallback
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax > 4.0) d *= 4.0 / dmax;  // log-scale trust region

    // Backtracking line search on the log coordinates.
    const double slope = d.dot(g_log);
    double step = 1.0;
    bool accepted = false;
    VectorXd v_new = v;
    for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
      for (int i = 0; i < nf; ++i) {
        const int idx = free_idx[i];
        double nv = v[idx] * std::exp(step * d[i]);
        if (idx >= 1) nv = std::max(nv, floor_g);
        v_new[idx] = nv;
      }
      Engine eng_new = make_engine(v_new);
      const double l_new = obj.loglik(eng_new);
      if (l_new >= l + 1e-4 * step * slope ||
          (std::isfinite(l_new) && l_new >= l && step < 1e-6)) {
        v = v_new;
        l = l_new;
        eng = std::move(eng_new);
        accepted = true;
        break;
      }
    }
    ++iter;
    if (!accepted) break;  // line search stalled at floating-point plateau
  }

  run.iterations = iter;
  run.theta = v;
  run.loglik = l;
  if (!run.converged && iter < options.max_iterations) {
    // Stalled line search still counts as converged if the gradient is flat.
    Engine final_eng = make_engine(v);
    const VectorXd g = obj.score(final_eng);
    double norm = 0.0;
    for (int i = 0; i < dim; ++i) {
      if (is_free[i]) norm = std::max(norm, std::fabs(v[i] * g[i]));
    }
    run.converged = norm <= options.gradient_tol;
  }
  return run;
}

// MINQUE(0)-style moment equations from the design Grams: solve the
// linear system matching E(r'r) and E(|Z_t'r|^2) under OLS residuals.
VectorXd moment_start(const DesignContext& ctx, const DataContext& data) {
  const int N = ctx.n_obs();
  const int p = ctx.n_fixed();
  const int s = ctx.n_terms();
  Eigen::LLT<MatrixXd> xtx(ctx.XtX());
  const VectorXd beta0 = xtx.solve(data.Xty);
  const double rss = std::max(data.yty - data.Xty.dot(beta0), 1e-12);

  VectorXd start(s + 1);
  if (s == 0) {
    start[0] = rss / std::max(N - p, 1);
    return start;
  }
  // Z'P0 Z blocks from the Grams: Z'Z - (Z'X)(X'X)^{-1}(X'Z).
  const MatrixXd zpz = ctx.ZtZ() - ctx.XtZ().transpose() * xtx.solve(ctx.XtZ());
  const VectorXd zr = data.Zty - ctx.XtZ().transpose() * beta0;

  MatrixXd M(s + 1, s + 1);
  VectorXd T(s + 1);
  M(0, 0) = N - p;
  T[0] = rss;
  for (int t = 0; t < s; ++t) {
    const int o = ctx.term_offset(t);
    const int m = ctx.term_cols(t);
    M(0, t + 1) = M(t + 1, 0) = zpz.block(o, o, m, m).trace();
    T[t + 1] = zr.segment(o, m).squaredNorm();
    for (int k = 0; k < s; ++k) {
      const int ok = ctx.term_offset(k);
      const int mk = ctx.term_cols(k);
      M(t + 1, k + 1) = zpz.block(o, ok, m, mk).squaredNorm();
    }
  }
  VectorXd sigma2 = M.fullPivLu().solve(T);
  const double lam = std::max(sigma2[0], 1e-3 * rss / std::max(N - p, 1));
  start[0] = lam;
  for (int t = 0; t < s; ++t) {
    start[t + 1] = std::clamp(sigma2[t + 1] / lam, 1e-6, 1e6);
  }
  return start;
}

FitResult run_fit(const DesignContext& ctx, const DataContext& data,
                  const std::map<int, double>& pinned, const FitOptions& options,
                  const Objective& obj) {
  const int s = ctx.n_terms();
  const int dim = s + 1;
  for (const auto& [idx, value] : pinned) {
    if (idx < 0 || idx >= dim) {
      throw std::invalid_argument("fit: pinned component index out of range");
    }
    if (idx == 0 && !(value > 0.0)) {
      throw std::invalid_argument("fit: pinned lambda must be positive");
    }
    if (idx >= 1 && !(value >= 0.0)) {
      throw std::invalid_argument("fit: pinned gamma must be nonnegative");
    }
  }

  std::vector<VectorXd> starts;
  if (!options.starts.empty()) {
    for (const auto& st : options.starts) starts.push_back(st.as_vector());
  } else {
    const VectorXd mom = moment_start(ctx, data);
    starts.push_back(mom);
    if (options.multistart && s > 0) {
      VectorXd half = mom, twice = mom;
      half.tail(s).setConstant(0.5);
      twice.tail(s).setConstant(2.0);
      starts.push_back(half);
      starts.push_back(twice);
    }
  }

  OptRun best;
  bool have_best = false;
  for (const auto& st : starts) {
    OptRun run = optimize_theta(ctx, data, st, pinned, options, obj);
    if (!have_best || run.loglik > best.loglik) {
      best = std::move(run);
      have_best = true;
    }
  }

  FitResult result;
  result.theta_hat = theta_from_flat(best.theta);
  result.loglik = best.loglik;
  result.converged = best.converged;
  result.boundary = best.boundary;
  result.iterations = best.iterations;
  Engine eng(ctx, data, result.theta_hat, options.backend);
  result.beta_hat.beta = eng.gls();
  return result;
}

Objective reml_objective() {
  return Objective{
      [](Engine& e) { return e.reml_loglik(); },
      [](Engine& e) { return e.reml_score(); },
      [](Engine& e) { return (-e.reml_expected_hessian()).eval(); }};
}

Objective ml_objective() {
  return Objective{
      [](Engine& e) { return e.ml_profile_loglik(); },
      [](Engine& e) { return e.ml_profile_score(); },
      [](Engine& e) { return (-e.ml_theta_expected_hessian()).eval(); }};
}

}  // namespace

FitResult fit_reml(const DesignContext& ctx, const DataContext& data,
                   const FitOptions& options) {
  return run_fit(ctx, data, {}, options, reml_objective());
}

FitResult fit_ml(const DesignContext& ctx, const DataContext& data,
                 const FitOptions& options) {
  return run_fit(ctx, data, {}, options, ml_objective());
}

FitResult fit_reml_constrained(const DesignContext& ctx, const DataContext& data,
                               const std::map<int, double>& fixed_components,
                               const FitOptions& options) {
  return run_fit(ctx, data, fixed_components, options, reml_objective());
}

FitResult fit_reml(const ModelSpec& model, const FitOptions& options) {
  model.validate();
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  return fit_reml(ctx, data, options);
}

FitResult fit_ml(const ModelSpec& model, const FitOptions& options) {
  model.validate();
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  return fit_ml(ctx, data, options);
}

FitResult fit_reml_constrained(const ModelSpec& model,
                               const std::map<int, double>& fixed_components,
                               const FitOptions& options) {
  model.validate();
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  return fit_reml_constrained(ctx, data, fixed_components, options);
}

}  // namespace poquim
