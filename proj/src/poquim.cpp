#include "poquim/poquim.hpp"

#include <cmath>
#include <stdexcept>

#include "poquim/detail/engine.hpp"

namespace poquim {

namespace {

using detail::Engine;
using detail::QuimSource;

// SymmetricForms adapters over a QuimSource.
class SourceForms final : public SymmetricForms {
 public:
  explicit SourceForms(const QuimSource& src) : src_(&src) {}
  int count() const override { return src_->n_forms(); }
  int n_obs() const override { return src_->n_obs(); }
  void fill_block(int j, std::span<const int> rows, MatrixXd& out) const override {
    src_->fill_form_block(j, rows, out);
  }
  VectorXd diagonal(int j) const override { return src_->form_diagonal(j); }

 private:
  const QuimSource* src_;
};

class SourceGamma final : public SymmetricForms {
 public:
  explicit SourceGamma(const QuimSource& src) : src_(&src) {}
  int count() const override { return 1; }
  int n_obs() const override { return src_->n_obs(); }
  void fill_block(int, std::span<const int> rows, MatrixXd& out) const override {
    src_->fill_gamma_block(rows, out);
  }
  VectorXd diagonal(int) const override { return src_->gamma_diagonal(); }

 private:
  const QuimSource* src_;
};

// observed(j,k) = sum_l c_{j,k,l} M_l, estimated(j,k) = G(j,k)
// - 3 lambda^2 sum_l c_{j,k,l} Gamma-pair-sum_l, with c = pair_sum / h.
void assemble_theta_blocks(const IndexClassPartition& part,
                           const QuadrupleSums& sums, const MatrixXd& gaussian,
                           double lambda, MatrixXd& observed,
                           MatrixXd& estimated) {
  const int nf = static_cast<int>(gaussian.rows());
  const int L = part.n_classes();
  observed = MatrixXd::Zero(nf, nf);
  estimated = gaussian;
  for (int j = 0, pk = 0; j < nf; ++j) {
    for (int k = j; k < nf; ++k, ++pk) {
      double obs = 0.0;
      double gam = 0.0;
      for (int l = 0; l < L; ++l) {
        const double c = sums.pair_sums(l, pk) / part.classes()[l].cardinality;
        obs += c * sums.weight_sums[l];
        gam += c * sums.kernel_pair_sums[l];
      }
      observed(j, k) = observed(k, j) = obs;
      const double est = estimated(j, k) - 3.0 * lambda * lambda * gam;
      estimated(j, k) = estimated(k, j) = est;
    }
  }
}

}  // namespace

QuimDecomposition poquim_reml(const DesignContext& ctx, const DataContext& data,
                              const IndexClassPartition& quadruples,
                              const VarianceComponents& theta,
                              const FixedEffects& beta,
                              const PoquimOptions& options) {
  const int s = ctx.n_terms();
  Engine eng(ctx, data, theta, options.backend);
  const VectorXd u = *data.y - ctx.model().X * beta.beta;
  const auto source = eng.reml_quim_source();
  SourceForms forms(*source);
  SourceGamma gamma(*source);
  const auto sums =
      sweep_quadruples(quadruples, &forms, &gamma, &u, options.exec);

  QuimDecomposition out;
  out.dimension = s + 1;
  out.is_ml = false;
  out.i2 = eng.reml_expected_hessian();
  assemble_theta_blocks(quadruples, sums, -out.i2, theta.lambda, out.observed,
                        out.estimated);
  out.total = out.observed + out.estimated;
  return out;
}

QuimDecomposition poquim_ml(const DesignContext& ctx, const DataContext& data,
                            const IndexClassPartition& triples,
                            const IndexClassPartition& quadruples,
                            const VarianceComponents& theta,
                            const FixedEffects& beta,
                            const PoquimOptions& options) {
  const int s = ctx.n_terms();
  const int p = ctx.n_fixed();
  const int dim = p + s + 1;
  Engine eng(ctx, data, theta, options.backend);
  const VectorXd u = *data.y - ctx.model().X * beta.beta;
  const auto source = eng.ml_quim_source();
  SourceForms forms(*source);
  SourceGamma gamma(*source);

  QuimDecomposition out;
  out.dimension = dim;
  out.is_ml = true;
  out.observed = MatrixXd::Zero(dim, dim);
  out.estimated = MatrixXd::Zero(dim, dim);
  out.i2 = eng.ml_expected_hessian();

  // beta block: purely estimated.
  out.estimated.topLeftCorner(p, p) = eng.xvx();

  // beta-theta block: purely observed, third-order class sums.
  const auto tsums =
      sweep_triples(triples, &source->q_columns(), &forms, &u, options.exec);
  const int L3 = triples.n_classes();
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k <= s; ++k) {
      double obs = 0.0;
      for (int l = 0; l < L3; ++l) {
        const double c1 = tsums.vec_form_sums(l, j * (s + 1) + k) /
                          triples.classes()[l].cardinality;
        obs += c1 * tsums.weight_sums[l];
      }
      out.observed(j, p + k) = out.observed(p + k, j) = obs;
    }
  }

  // theta block: same decomposition as the restricted case with C forms.
  const auto qsums =
      sweep_quadruples(quadruples, &forms, &gamma, &u, options.exec);
  MatrixXd obs_tt, est_tt;
  const MatrixXd gaussian_tt = -eng.ml_theta_expected_hessian();
  assemble_theta_blocks(quadruples, qsums, gaussian_tt, theta.lambda, obs_tt,
                        est_tt);
  out.observed.bottomRightCorner(s + 1, s + 1) = obs_tt;
  out.estimated.bottomRightCorner(s + 1, s + 1) = est_tt;

  out.total = out.observed + out.estimated;
  return out;
}

QuimDecomposition poquim_reml(const VarianceComponents& theta,
                              const FixedEffects& beta, const ModelSpec& model,
                              const PoquimOptions& options) {
  model.validate();
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  const auto quadruples = classify_quadruples(model, options.classify);
  return poquim_reml(ctx, data, quadruples, theta, beta, options);
}

QuimDecomposition poquim_ml(const VarianceComponents& theta,
                            const FixedEffects& beta, const ModelSpec& model,
                            const PoquimOptions& options) {
  model.validate();
  const DesignContext ctx(model);
  const DataContext data(ctx, model.y);
  const auto triples = classify_triples(model, options.classify);
  const auto quadruples = classify_quadruples(model, options.classify);
  return poquim_ml(ctx, data, triples, quadruples, theta, beta, options);
}

AcmEstimate acm(const QuimDecomposition& decomp) {
  Eigen::FullPivLU<MatrixXd> lu(decomp.i2);
  if (!lu.isInvertible()) {
    throw std::runtime_error("acm: expected-Hessian matrix is singular");
  }
  const MatrixXd i2inv = lu.inverse();
  MatrixXd sigma = i2inv * decomp.total * i2inv;
  sigma = 0.5 * (sigma + sigma.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
  const double max_eig = std::max(1.0, es.eigenvalues().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * max_eig) {
    throw std::runtime_error(
        "acm: sandwich estimate has a significantly negative eigenvalue");
  }
  AcmEstimate out;
  out.sigma = std::move(sigma);
  out.source = decomp.is_ml ? AcmEstimate::Source::ml : AcmEstimate::Source::reml;
  return out;
}

}  // namespace poquim
