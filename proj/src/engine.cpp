#include "poquim/detail/engine.hpp"

#include <cmath>
#include <stdexcept>

namespace poquim {

DesignContext::DesignContext(const ModelSpec& model) : model_(&model) {
  N_ = model.n_obs();
  p_ = model.n_fixed();
  s_ = model.n_random_terms();
  q_ = 0;
  offsets_.resize(s_);
  cols_.resize(s_);
  for (int t = 0; t < s_; ++t) {
    offsets_[t] = q_;
    cols_[t] = static_cast<int>(model.Z[t].cols());
    q_ += cols_[t];
  }
  Zall_.resize(N_, q_);
  for (int t = 0; t < s_; ++t) {
    Zall_.middleCols(offsets_[t], cols_[t]) = model.Z[t];
  }
  ZtZ_.noalias() = Zall_.transpose() * Zall_;
  XtZ_.noalias() = model.X.transpose() * Zall_;
  XtX_.noalias() = model.X.transpose() * model.X;
}

DataContext::DataContext(const DesignContext& ctx, const VectorXd& yvec)
    : y(&yvec) {
  Zty.noalias() = ctx.Zall().transpose() * yvec;
  Xty.noalias() = ctx.model().X.transpose() * yvec;
  yty = yvec.squaredNorm();
}

namespace detail {

Backend resolve_backend(Backend requested, int N, int q) {
  if (requested != Backend::automatic) return requested;
  return (4 * q <= 3 * N) ? Backend::reduced : Backend::dense;
}

Engine::Engine(const DesignContext& ctx, const DataContext& data,
               const VarianceComponents& theta, Backend backend)
    : ctx_(&ctx), data_(&data), theta_(theta) {
  theta_.validate();
  N_ = ctx.n_obs();
  p_ = ctx.n_fixed();
  s_ = ctx.n_terms();
  q_ = ctx.total_random_cols();
  if (theta_.gamma.size() != s_) {
    throw std::invalid_argument("engine: theta/model term count mismatch");
  }
  for (int t = 0; t < s_; ++t) {
    if (theta_.gamma[t] > 0.0) {
      active_.push_back(t);
      for (int c = 0; c < ctx.term_cols(t); ++c) {
        acols_.push_back(ctx.term_offset(t) + c);
      }
    }
  }
  reduced_ = resolve_backend(backend, N_, q_) == Backend::reduced;

  const MatrixXd& X = ctx.model().X;
  const VectorXd& y = *data.y;
  const int qa = static_cast<int>(acols_.size());

  if (reduced_) {
    if (qa > 0) {
      MatrixXd A(qa, qa);
      for (int i = 0; i < qa; ++i) {
        for (int j = 0; j < qa; ++j) A(i, j) = ctx.ZtZ()(acols_[i], acols_[j]);
      }
      double logdet_g = 0.0;
      int flat = 0;
      for (int t : active_) {
        const double g = theta_.gamma[t];
        for (int c = 0; c < ctx.term_cols(t); ++c, ++flat) A(flat, flat) += 1.0 / g;
        logdet_g += ctx.term_cols(t) * std::log(g);
      }
      a_llt_.compute(A);
      if (a_llt_.info() != Eigen::Success) {
        throw std::runtime_error("engine: G^{-1} + Z'Z not positive definite");
      }
      logdet_w_ = logdet_g;
      const auto& L = a_llt_.matrixL();
      for (int i = 0; i < qa; ++i) logdet_w_ += 2.0 * std::log(L(i, i));

      MatrixXd ZaX(qa, p_);
      VectorXd Zay(qa);
      for (int i = 0; i < qa; ++i) {
        ZaX.row(i) = ctx.XtZ().col(acols_[i]).transpose();
        Zay[i] = data.Zty[acols_[i]];
      }
      hx_ = L.solve(ZaX);
      hy_ = L.solve(Zay);
      xwx_.noalias() = ctx.XtX() - hx_.transpose() * hx_;
      xwy_.noalias() = data.Xty - hx_.transpose() * hy_;
      ywy_ = data.yty - hy_.squaredNorm();
    } else {
      logdet_w_ = 0.0;
      xwx_ = ctx.XtX();
      xwy_ = data.Xty;
      ywy_ = data.yty;
    }
  } else {
    MatrixXd W = MatrixXd::Identity(N_, N_);
    for (int t : active_) {
      const MatrixXd& Zt = ctx.model().Z[t];
      W.noalias() += theta_.gamma[t] * (Zt * Zt.transpose());
    }
    dense_llt_.compute(W);
    if (dense_llt_.info() != Eigen::Success) {
      throw std::runtime_error("engine: W not positive definite");
    }
    const auto& L = dense_llt_.matrixL();
    logdet_w_ = 0.0;
    for (int i = 0; i < N_; ++i) logdet_w_ += 2.0 * std::log(L(i, i));
    const MatrixXd Lx = L.solve(X);
    const VectorXd ly = L.solve(y);
    xwx_.noalias() = Lx.transpose() * Lx;
    xwy_.noalias() = Lx.transpose() * ly;
    ywy_ = ly.squaredNorm();
  }

  xwx_llt_.compute(xwx_);
  if (xwx_llt_.info() != Eigen::Success) {
    throw std::runtime_error("engine: X'V^{-1}X numerically singular");
  }
  beta_gls_ = xwx_llt_.solve(xwy_);
  ypwy_ = ywy_ - xwy_.dot(beta_gls_);
}

void Engine::ensure_zblocks() {
  if (zblocks_ready_) return;
  if (reduced_) {
    const int qa = static_cast<int>(acols_.size());
    if (qa > 0) {
      MatrixXd ZaZ(qa, q_);
      for (int i = 0; i < qa; ++i) ZaZ.row(i) = ctx_->ZtZ().row(acols_[i]);
      const MatrixXd hz = a_llt_.matrixL().solve(ZaZ);
      zwz_.noalias() = ctx_->ZtZ() - hz.transpose() * hz;
      zwy_.noalias() = data_->Zty - hz.transpose() * hy_;
      zwx_.noalias() = ctx_->XtZ().transpose() - hz.transpose() * hx_;
    } else {
      zwz_ = ctx_->ZtZ();
      zwy_ = data_->Zty;
      zwx_ = ctx_->XtZ().transpose();
    }
  } else {
    const auto& L = dense_llt_.matrixL();
    const MatrixXd Lz = L.solve(ctx_->Zall());
    const VectorXd ly = L.solve(*data_->y);
    const MatrixXd Lx = L.solve(ctx_->model().X);
    zwz_.noalias() = Lz.transpose() * Lz;
    zwy_.noalias() = Lz.transpose() * ly;
    zwx_.noalias() = Lz.transpose() * Lx;
  }
  zpy_.noalias() = zwy_ - zwx_ * beta_gls_;
  zpz_.noalias() = zwz_ - zwx_ * xwx_llt_.solve(zwx_.transpose());
  zblocks_ready_ = true;
}

double Engine::reml_loglik() const {
  double logdet_s = 0.0;
  const auto& Ls = xwx_llt_.matrixL();
  for (int i = 0; i < p_; ++i) logdet_s += 2.0 * std::log(Ls(i, i));
  const double lambda = theta_.lambda;
  return -0.5 * ((N_ - p_) * std::log(lambda) + logdet_w_ + logdet_s +
                 ypwy_ / lambda);
}

VectorXd Engine::reml_score() {
  ensure_zblocks();
  const double lambda = theta_.lambda;
  VectorXd g(s_ + 1);
  g[0] = (ypwy_ / lambda - (N_ - p_)) / (2.0 * lambda);
  for (int t = 0; t < s_; ++t) {
    const int o = ctx_->term_offset(t);
    const int m = ctx_->term_cols(t);
    const double quad = zpy_.segment(o, m).squaredNorm() / (2.0 * lambda);
    const double tr = zpz_.block(o, o, m, m).trace();
    g[t + 1] = quad - 0.5 * tr;
  }
  return g;
}

MatrixXd Engine::reml_expected_hessian() {
  ensure_zblocks();
  const double lambda = theta_.lambda;
  MatrixXd H(s_ + 1, s_ + 1);
  H(0, 0) = -(N_ - p_) / (2.0 * lambda * lambda);
  for (int j = 0; j < s_; ++j) {
    const int oj = ctx_->term_offset(j);
    const int mj = ctx_->term_cols(j);
    const double trj = zpz_.block(oj, oj, mj, mj).trace();
    H(0, j + 1) = H(j + 1, 0) = -trj / (2.0 * lambda);
    for (int k = j; k < s_; ++k) {
      const int ok = ctx_->term_offset(k);
      const int mk = ctx_->term_cols(k);
      const double fro2 = zpz_.block(oj, ok, mj, mk).squaredNorm();
      H(j + 1, k + 1) = H(k + 1, j + 1) = -0.5 * fro2;
    }
  }
  return H;
}

double Engine::ml_loglik(const VectorXd& beta) const {
  const double lambda = theta_.lambda;
  const double uwu =
      ywy_ - 2.0 * xwy_.dot(beta) + beta.dot(xwx_ * beta);
  return -0.5 * (N_ * std::log(lambda) + logdet_w_ + uwu / lambda);
}

VectorXd Engine::ml_score(const VectorXd& beta) {
  ensure_zblocks();
  const double lambda = theta_.lambda;
  VectorXd g(p_ + s_ + 1);
  const VectorXd xwu = xwy_ - xwx_ * beta;
  g.head(p_) = xwu / lambda;
  const double uwu = ywy_ - 2.0 * xwy_.dot(beta) + beta.dot(xwx_ * beta);
  g[p_] = (uwu / lambda - N_) / (2.0 * lambda);
  const VectorXd zwu = zwy_ - zwx_ * beta;
  for (int t = 0; t < s_; ++t) {
    const int o = ctx_->term_offset(t);
    const int m = ctx_->term_cols(t);
    const double quad = zwu.segment(o, m).squaredNorm() / (2.0 * lambda);
    const double tr = zwz_.block(o, o, m, m).trace();
    g[p_ + 1 + t] = quad - 0.5 * tr;
  }
  return g;
}

VectorXd Engine::ml_profile_score() {
  const VectorXd full = ml_score(beta_gls_);
  return full.tail(s_ + 1);
}

MatrixXd Engine::ml_theta_expected_hessian() {
  ensure_zblocks();
  const double lambda = theta_.lambda;
  MatrixXd H(s_ + 1, s_ + 1);
  H(0, 0) = -N_ / (2.0 * lambda * lambda);
  for (int j = 0; j < s_; ++j) {
    const int oj = ctx_->term_offset(j);
    const int mj = ctx_->term_cols(j);
    H(0, j + 1) = H(j + 1, 0) = -zwz_.block(oj, oj, mj, mj).trace() / (2.0 * lambda);
    for (int k = j; k < s_; ++k) {
      const int ok = ctx_->term_offset(k);
      const int mk = ctx_->term_cols(k);
      H(j + 1, k + 1) = H(k + 1, j + 1) =
          -0.5 * zwz_.block(oj, ok, mj, mk).squaredNorm();
    }
  }
  return H;
}

MatrixXd Engine::ml_expected_hessian() {
  MatrixXd H = MatrixXd::Zero(p_ + s_ + 1, p_ + s_ + 1);
  H.topLeftCorner(p_, p_) = -xwx_ / theta_.lambda;
  H.bottomRightCorner(s_ + 1, s_ + 1) = ml_theta_expected_hessian();
  return H;
}

MatrixXd Engine::xvx() const { return xwx_ / theta_.lambda; }

std::unique_ptr<QuimSource> Engine::reml_quim_source() {
  ensure_zblocks();
  const MatrixXd& X = ctx_->model().X;
  std::vector<MatrixXd> K(s_);
  if (reduced_) {
    const int qa = static_cast<int>(acols_.size());
    MatrixXd Zhat(N_, qa);
    if (qa > 0) {
      MatrixXd Za(N_, qa);
      for (int i = 0; i < qa; ++i) Za.col(i) = ctx_->Zall().col(acols_[i]);
      // Zhat = Za L_A^{-T}: solve L_A' on the right.
      Zhat = a_llt_.matrixU().solve<Eigen::OnTheRight>(Za);
    }
    MatrixXd F = X;
    if (qa > 0) F.noalias() -= Zhat * hx_;
    const MatrixXd Xhat = xwx_llt_.matrixU().solve<Eigen::OnTheRight>(F);
    for (int t = 0; t < s_; ++t) {
      const int o = ctx_->term_offset(t);
      const int m = ctx_->term_cols(t);
      K[t] = ctx_->model().Z[t];
      if (qa > 0) {
        // Zhat' Z_t = L_A^{-1} (Za' Z_t), a block of the design Gram.
        MatrixXd ZaZt(qa, m);
        for (int i = 0; i < qa; ++i) {
          ZaZt.row(i) = ctx_->ZtZ().row(acols_[i]).segment(o, m);
        }
        const MatrixXd hzt = a_llt_.matrixL().solve(ZaZt);
        K[t].noalias() -= Zhat * hzt;
      }
      const MatrixXd xzt = xwx_llt_.matrixL().solve(zwx_.middleRows(o, m).transpose());
      K[t].noalias() -= Xhat * xzt;
    }
    return std::make_unique<FactorQuimSource>(ctx_->model(), theta_.lambda,
                                              theta_.gamma, std::move(Zhat),
                                              Xhat, std::move(K), MatrixXd());
  }
  const MatrixXd Wi = dense_llt_.solve(MatrixXd::Identity(N_, N_));
  const MatrixXd F = dense_llt_.solve(X);
  MatrixXd Pw = Wi - F * xwx_llt_.solve(F.transpose());
  Pw = 0.5 * (Pw + Pw.transpose()).eval();
  for (int t = 0; t < s_; ++t) K[t].noalias() = Pw * ctx_->model().Z[t];
  return std::make_unique<DenseQuimSource>(ctx_->model(), theta_.lambda,
                                           theta_.gamma, std::move(Pw),
                                           std::move(K), MatrixXd());
}

std::unique_ptr<QuimSource> Engine::ml_quim_source() {
  ensure_zblocks();
  const MatrixXd& X = ctx_->model().X;
  std::vector<MatrixXd> K(s_);
  if (reduced_) {
    const int qa = static_cast<int>(acols_.size());
    MatrixXd Zhat(N_, qa);
    if (qa > 0) {
      MatrixXd Za(N_, qa);
      for (int i = 0; i < qa; ++i) Za.col(i) = ctx_->Zall().col(acols_[i]);
      Zhat = a_llt_.matrixU().solve<Eigen::OnTheRight>(Za);
    }
    MatrixXd F = X;
    if (qa > 0) F.noalias() -= Zhat * hx_;
    for (int t = 0; t < s_; ++t) {
      const int o = ctx_->term_offset(t);
      const int m = ctx_->term_cols(t);
      K[t] = ctx_->model().Z[t];
      if (qa > 0) {
        MatrixXd ZaZt(qa, m);
        for (int i = 0; i < qa; ++i) {
          ZaZt.row(i) = ctx_->ZtZ().row(acols_[i]).segment(o, m);
        }
        const MatrixXd hzt = a_llt_.matrixL().solve(ZaZt);
        K[t].noalias() -= Zhat * hzt;
      }
    }
    return std::make_unique<FactorQuimSource>(ctx_->model(), theta_.lambda,
                                              theta_.gamma, std::move(Zhat),
                                              MatrixXd(), std::move(K),
                                              F / theta_.lambda);
  }
  const MatrixXd Wi = dense_llt_.solve(MatrixXd::Identity(N_, N_));
  const MatrixXd F = dense_llt_.solve(X);
  for (int t = 0; t < s_; ++t) K[t].noalias() = Wi * ctx_->model().Z[t];
  return std::make_unique<DenseQuimSource>(ctx_->model(), theta_.lambda,
                                           theta_.gamma, Wi, std::move(K),
                                           F / theta_.lambda);
}

// --- QuimSource -------------------------------------------------------------

void QuimSource::fill_form_block(int j, std::span<const int> rows,
                                 MatrixXd& out) const {
  const int n = static_cast<int>(rows.size());
  if (j == 0) {
    const double scale = 1.0 / (2.0 * lambda_ * lambda_);
    for (int r = 0; r < n; ++r) {
      for (int c = r; c < n; ++c) {
        const double v = scale * kernel_entry(rows[r], rows[c]);
        out(r, c) = v;
        out(c, r) = v;
      }
    }
    return;
  }
  const MatrixXd& Kj = K_[j - 1];
  const double scale = 1.0 / (2.0 * lambda_);
  for (int r = 0; r < n; ++r) {
    for (int c = r; c < n; ++c) {
      const double v = scale * Kj.row(rows[r]).dot(Kj.row(rows[c]));
      out(r, c) = v;
      out(c, r) = v;
    }
  }
}

VectorXd QuimSource::form_diagonal(int j) const {
  VectorXd d(N_);
  if (j == 0) {
    const double scale = 1.0 / (2.0 * lambda_ * lambda_);
    for (int i = 0; i < N_; ++i) d[i] = scale * kernel_entry(i, i);
    return d;
  }
  const MatrixXd& Kj = K_[j - 1];
  const double scale = 1.0 / (2.0 * lambda_);
  for (int i = 0; i < N_; ++i) d[i] = scale * Kj.row(i).squaredNorm();
  return d;
}

void QuimSource::fill_gamma_block(std::span<const int> rows, MatrixXd& out) const {
  const int n = static_cast<int>(rows.size());
  const int s = static_cast<int>(model_->Z.size());
  for (int r = 0; r < n; ++r) {
    for (int c = r; c < n; ++c) {
      double v = rows[r] == rows[c] ? 1.0 : 0.0;
      for (int t = 0; t < s; ++t) {
        const double g = gamma_[t];
        if (g != 0.0) v += g * model_->Z[t].row(rows[r]).dot(model_->Z[t].row(rows[c]));
      }
      out(r, c) = v;
      out(c, r) = v;
    }
  }
}

VectorXd QuimSource::gamma_diagonal() const {
  VectorXd d = VectorXd::Ones(N_);
  const int s = static_cast<int>(model_->Z.size());
  for (int t = 0; t < s; ++t) {
    const double g = gamma_[t];
    if (g != 0.0) d += g * model_->Z[t].rowwise().squaredNorm();
  }
  return d;
}

DenseQuimSource::DenseQuimSource(const ModelSpec& model, double lambda,
                                 const VectorXd& gamma, MatrixXd kernel,
                                 std::vector<MatrixXd> K, MatrixXd qcols)
    : QuimSource(model, lambda, gamma), kernel_(std::move(kernel)) {
  K_ = std::move(K);
  qcols_ = std::move(qcols);
}

FactorQuimSource::FactorQuimSource(const ModelSpec& model, double lambda,
                                   const VectorXd& gamma, MatrixXd Zhat,
                                   MatrixXd Xhat, std::vector<MatrixXd> K,
                                   MatrixXd qcols)
    : QuimSource(model, lambda, gamma),
      Zhat_(std::move(Zhat)),
      Xhat_(std::move(Xhat)) {
  K_ = std::move(K);
  qcols_ = std::move(qcols);
}

double FactorQuimSource::kernel_entry(int a, int b) const {
  double v = a == b ? 1.0 : 0.0;
  if (Zhat_.cols() > 0) v -= Zhat_.row(a).dot(Zhat_.row(b));
  if (Xhat_.cols() > 0) v -= Xhat_.row(a).dot(Xhat_.row(b));
  return v;
}

}  // namespace detail
}  // namespace poquim
