#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "poquim/likelihood.hpp"
#include "poquim/model.hpp"
#include "poquim/poquim.hpp"

namespace poquim {

/// Linear hypothesis K' theta = phi on the variance components;
/// K is (s+1) x r of rank r.
struct Hypothesis {
  MatrixXd K;
  VectorXd phi;

  int rank() const { return static_cast<int>(K.cols()); }
  void validate(int theta_dim) const;
};

struct TestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  std::map<double, bool> reject_at;  // nominal level -> decision
  std::string method;                // "POQUIM-chi2" or "jackknife-t"
};

/// Upper tail P(X > x) of the chi-square law with r degrees of freedom.
double chi2_upper_tail(double x, double r);

/// Two-sided tail P(|T| > t) of Student's t with df degrees of freedom.
double student_t_two_sided(double t, double df);

/// Chi-square dispersion test: statistic
/// (K'theta_hat - phi)' (K' Sigma K)^{-1} (K'theta_hat - phi),
/// referred to the chi-square law with rank(K) degrees of freedom.
TestResult dispersion_test(const FitResult& fit, const AcmEstimate& acm,
                           const Hypothesis& h,
                           const std::vector<double>& levels = {0.01, 0.05, 0.10});

/// Equality of the two variance ratios in a crossed two-factor model:
/// the contrast K = (0, 1, -1)', phi = 0.
TestResult twoway_equal_variance_test(const FitResult& fit,
                                      const AcmEstimate& acm,
                                      const std::vector<double>& levels = {0.01, 0.05, 0.10});

/// Balanced one-way layout as group sums: data(i, j) = observation j of
/// group i.
struct OnewayData {
  MatrixXd y;  // m x n
  int m() const { return static_cast<int>(y.rows()); }
  int n() const { return static_cast<int>(y.cols()); }
};

/// Delete-group jackknife test of gamma_1 = gamma0 on the transformed
/// scale log(1 + gamma_1 n), with log(MSA/MSE) as the point estimator and
/// pseudo-values from leave-one-group-out refits; referred two-sided to
/// Student's t with m-1 degrees of freedom. Group subsets reuse one pass
/// of sums and sums of squares, so each deletion is O(1).
TestResult jackknife_oneway_test(const OnewayData& data, double gamma0,
                                 const std::vector<double>& levels = {0.01, 0.05, 0.10});

/// Leave-one-group-out estimates log(MSA_{-i}/MSE_{-i}); exposed for the
/// from-scratch recomputation check.
VectorXd jackknife_leave_one_out(const OnewayData& data);

}  // namespace poquim
