#include "poquim/inference.hpp"

#include <cmath>
#include <stdexcept>

#include "poquim/special_functions.hpp"

namespace poquim {

void Hypothesis::validate(int theta_dim) const {
  if (K.rows() != theta_dim) {
    throw std::invalid_argument("hypothesis: K must have s+1 rows");
  }
  const int r = rank();
  if (r < 1 || r > theta_dim) {
    throw std::invalid_argument("hypothesis: need 1 <= rank(K) <= s+1");
  }
  if (phi.size() != r) {
    throw std::invalid_argument("hypothesis: phi length must equal rank(K)");
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(K);
  qr.setThreshold(1e-10);
  if (qr.rank() < r) {
    throw std::invalid_argument("hypothesis: K is rank deficient");
  }
}

double chi2_upper_tail(double x, double r) {
  if (x < 0.0 || r < 1.0) {
    throw std::invalid_argument("chi2_upper_tail: require x >= 0, r >= 1");
  }
  return reg_gamma_upper(r / 2.0, x / 2.0);
}

double student_t_two_sided(double t, double df) {
  if (df < 1.0) {
    throw std::invalid_argument("student_t_two_sided: require df >= 1");
  }
  if (t == 0.0) return 1.0;
  return reg_beta(df / 2.0, 0.5, df / (df + t * t));
}

namespace {

std::map<double, bool> decisions(double p, const std::vector<double>& levels) {
  std::map<double, bool> out;
  for (double a : levels) out[a] = p < a;
  return out;
}

}  // namespace

TestResult dispersion_test(const FitResult& fit, const AcmEstimate& acm,
                           const Hypothesis& h,
                           const std::vector<double>& levels) {
  const VectorXd theta = fit.theta_hat.as_vector();
  h.validate(static_cast<int>(theta.size()));
  if (acm.sigma.rows() != theta.size()) {
    throw std::invalid_argument(
        "dispersion_test: ACM dimension does not match theta (use the "
        "restricted-likelihood sandwich)");
  }
  const VectorXd diff = h.K.transpose() * theta - h.phi;
  const MatrixXd S = h.K.transpose() * acm.sigma * h.K;
  Eigen::FullPivLU<MatrixXd> lu(S);
  if (!lu.isInvertible()) {
    throw std::runtime_error("dispersion_test: K' Sigma K is singular");
  }
  TestResult out;
  out.statistic = diff.dot(lu.solve(diff));
  out.df = h.rank();
  out.p_value = chi2_upper_tail(std::max(out.statistic, 0.0), out.df);
  out.reject_at = decisions(out.p_value, levels);
  out.method = "POQUIM-chi2";
  return out;
}

TestResult twoway_equal_variance_test(const FitResult& fit,
                                      const AcmEstimate& acm,
                                      const std::vector<double>& levels) {
  if (fit.theta_hat.gamma.size() != 2) {
    throw std::invalid_argument(
        "twoway_equal_variance_test: requires a crossed two-factor model");
  }
  Hypothesis h;
  h.K = MatrixXd(3, 1);
  h.K << 0.0, 1.0, -1.0;
  h.phi = VectorXd::Constant(1, 0.0);
  return dispersion_test(fit, acm, h, levels);
}

VectorXd jackknife_leave_one_out(const OnewayData& data) {
  const int m = data.m();
  const int n = data.n();
  if (m < 3 || n < 2) {
    throw std::invalid_argument("jackknife: need m >= 3 groups of size n >= 2");
  }
  // One pass of group sums and sums of squares makes each deletion O(1).
  VectorXd S(m), Q(m);
  for (int i = 0; i < m; ++i) {
    S[i] = data.y.row(i).sum();
    Q[i] = data.y.row(i).squaredNorm();
  }
  const double S_tot = S.sum();
  const double sum_S2n = S.squaredNorm() / n;
  const double sse_tot = Q.sum() - sum_S2n;

  VectorXd out(m);
  for (int i = 0; i < m; ++i) {
    const int m1 = m - 1;
    const double S1 = S_tot - S[i];
    const double sse = sse_tot - (Q[i] - S[i] * S[i] / n);
    const double ssa = (sum_S2n - S[i] * S[i] / n) - S1 * S1 / (m1 * n);
    const double msa = ssa / (m1 - 1);
    const double mse = sse / (m1 * (n - 1));
    if (!(msa > 0.0) || !(mse > 0.0)) {
      throw std::runtime_error(
          "jackknife: non-positive mean square in a leave-one-out subset");
    }
    out[i] = std::log(msa / mse);
  }
  return out;
}

TestResult jackknife_oneway_test(const OnewayData& data, double gamma0,
                                 const std::vector<double>& levels) {
  const int m = data.m();
  const int n = data.n();
  if (m < 3 || n < 2) {
    throw std::invalid_argument("jackknife: need m >= 3 groups of size n >= 2");
  }
  if (!(gamma0 >= 0.0)) {
    throw std::invalid_argument("jackknife: gamma0 must be nonnegative");
  }
  VectorXd S(m), Q(m);
  for (int i = 0; i < m; ++i) {
    S[i] = data.y.row(i).sum();
    Q[i] = data.y.row(i).squaredNorm();
  }
  const double S_tot = S.sum();
  const double ssa = S.squaredNorm() / n - S_tot * S_tot / (m * n);
  const double sse = Q.sum() - S.squaredNorm() / n;
  const double msa = ssa / (m - 1);
  const double mse = sse / (m * (n - 1));
  if (!(msa > 0.0) || !(mse > 0.0)) {
    throw std::runtime_error("jackknife: non-positive mean square");
  }
  const double est = std::log(msa / mse);
  const VectorXd loo = jackknife_leave_one_out(data);

  // Pseudo-values and their mean; by construction the pseudo-value mean
  // is the jackknife point estimate.
  VectorXd pseudo(m);
  for (int i = 0; i < m; ++i) pseudo[i] = m * est - (m - 1) * loo[i];
  const double jack = pseudo.mean();
  const double ss = (pseudo.array() - jack).square().sum() / (m - 1);
  const double target = std::log(1.0 + gamma0 * n);

  TestResult out;
  out.statistic = std::sqrt(static_cast<double>(m)) * (jack - target) /
                  std::sqrt(ss);
  out.df = m - 1;
  out.p_value = student_t_two_sided(out.statistic, out.df);
  out.reject_at = decisions(out.p_value, levels);
  out.method = "jackknife-t";
  return out;
}

}  // namespace poquim
