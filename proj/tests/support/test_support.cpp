#include "test_support.hpp"

#include <functional>
#include <stdexcept>

namespace poquim::test {

ModelSpec oneway_model(int m, int n, Rng& rng) {
  const int N = m * n;
  ModelSpec model;
  model.y.resize(N);
  for (int i = 0; i < N; ++i) model.y[i] = rng.normal();
  model.X = MatrixXd::Ones(N, 1);
  MatrixXd Z = MatrixXd::Zero(N, m);
  for (int i = 0; i < m; ++i) Z.block(i * n, i, n, 1).setOnes();
  model.Z.push_back(std::move(Z));
  return model;
}

ModelSpec twoway_model(int m, int n, Rng& rng) {
  const int N = m * n;
  ModelSpec model;
  model.y.resize(N);
  for (int i = 0; i < N; ++i) model.y[i] = rng.normal();
  model.X = MatrixXd::Ones(N, 1);
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
  return model;
}

ModelSpec nested_model(const std::vector<int>& group_sizes, int p, Rng& rng) {
  int N = 0;
  for (int n : group_sizes) N += n;
  const int m = static_cast<int>(group_sizes.size());
  ModelSpec model;
  model.y.resize(N);
  model.X.resize(N, p);
  MatrixXd Z = MatrixXd::Zero(N, m);
  int row = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < group_sizes[i]; ++j, ++row) {
      model.y[row] = rng.normal();
      model.X(row, 0) = 1.0;
      for (int c = 1; c < p; ++c) model.X(row, c) = rng.normal();
      Z(row, i) = 1.0;
    }
  }
  model.Z.push_back(std::move(Z));
  return model;
}

ModelSpec intercept_slope_model(int m, Rng& rng) {
  const int N = 2 * m;
  ModelSpec model;
  model.y.resize(N);
  model.X = MatrixXd::Zero(N, 2);
  MatrixXd Z1 = MatrixXd::Zero(N, m);
  MatrixXd Z2 = MatrixXd::Zero(N, m);
  for (int i = 0; i < m; ++i) {
    const double t = 0.5 + 1.5 * (i + 1) / (m + 1.0) + 0.05 * rng.uniform();
    model.y[2 * i] = rng.normal();
    model.y[2 * i + 1] = rng.normal();
    model.X(2 * i, 0) = 1.0;
    model.X(2 * i + 1, 0) = 1.0;
    model.X(2 * i + 1, 1) = t;
    Z1(2 * i, i) = 1.0;
    Z1(2 * i + 1, i) = 1.0;
    Z2(2 * i + 1, i) = t;
  }
  model.Z.push_back(std::move(Z1));
  model.Z.push_back(std::move(Z2));
  model.allow_zero_rows = {false, true};
  return model;
}

ModelSpec random_model(int N, int s, int p, bool real_loadings, Rng& rng) {
  ModelSpec model;
  model.y.resize(N);
  for (int i = 0; i < N; ++i) model.y[i] = rng.normal();
  model.X.resize(N, p);
  model.X.col(0).setOnes();
  for (int c = 1; c < p; ++c) {
    for (int i = 0; i < N; ++i) model.X(i, c) = rng.normal();
  }
  model.allow_zero_rows.assign(s, real_loadings);
  for (int t = 0; t < s; ++t) {
    const int groups = 2 + static_cast<int>(rng.uniform() * (N / 2));
    MatrixXd Z = MatrixXd::Zero(N, groups);
    for (int i = 0; i < N; ++i) {
      const int g = static_cast<int>(rng.uniform() * groups);
      double w = 1.0;
      if (real_loadings) {
        w = 0.3 + 1.4 * rng.uniform();
        if (rng.uniform() < 0.15) w = 0.0;  // occasional structural zero
      }
      Z(i, g) = w;
    }
    // Grouping terms need every row touched.
    if (!real_loadings) {
      for (int i = 0; i < N; ++i) {
        if (Z.row(i).cwiseAbs().maxCoeff() == 0.0) Z(i, 0) = 1.0;
      }
    }
    model.Z.push_back(std::move(Z));
  }
  return model;
}

VarianceComponents random_theta(int s, Rng& rng) {
  VarianceComponents theta;
  theta.lambda = 0.5 + 1.5 * rng.uniform();
  theta.gamma.resize(s);
  for (int t = 0; t < s; ++t) theta.gamma[t] = 0.3 + 2.2 * rng.uniform();
  return theta;
}

MatrixXd gamma_kernel(const VarianceComponents& theta, const ModelSpec& model) {
  const int N = model.n_obs();
  MatrixXd G = MatrixXd::Identity(N, N);
  for (int t = 0; t < model.n_random_terms(); ++t) {
    G += theta.gamma[t] * (model.Z[t] * model.Z[t].transpose());
  }
  return G;
}

namespace {

struct KeyLess {
  bool operator()(const std::vector<double>& a,
                  const std::vector<double>& b) const {
    return a < b;
  }
};

std::vector<double> tuple_key(const ModelSpec& model, const int* idx,
                              int order) {
  const int s = model.n_random_terms();
  std::vector<double> key(s + 1, 0.0);
  bool all_equal = true;
  for (int k = 1; k < order; ++k) all_equal = all_equal && idx[k] == idx[0];
  key[0] = all_equal ? 1.0 : 0.0;
  for (int t = 0; t < s; ++t) {
    const MatrixXd& Z = model.Z[t];
    double sum = 0.0, asum = 0.0;
    for (int l = 0; l < Z.cols(); ++l) {
      double prod = 1.0;
      for (int k = 0; k < order; ++k) prod *= Z(idx[k], l);
      sum += prod;
      asum += std::fabs(prod);
    }
    key[t + 1] = std::fabs(sum) <= 1e-12 * asum ? 0.0 : sum;
  }
  return key;
}

}  // namespace

std::vector<BruteClass> brute_force_classes(
    const ModelSpec& model, int order, const std::vector<MatrixXd>& forms,
    const VectorXd* u, bool with_gamma, const VarianceComponents* theta,
    const MatrixXd* vecs) {
  const int N = model.n_obs();
  const int nf = static_cast<int>(forms.size());
  const int nv = vecs ? static_cast<int>(vecs->cols()) : 0;
  const int nsums =
      order == 4 ? nf * (nf + 1) / 2 : (vecs ? nv * nf : 0);
  MatrixXd G;
  if (with_gamma) {
    if (!theta) throw std::invalid_argument("brute force: gamma needs theta");
    G = gamma_kernel(*theta, model);
  }

  std::map<std::vector<double>, BruteClass, KeyLess> classes;
  int idx[4] = {0, 0, 0, 0};
  const long long total = static_cast<long long>(std::pow(N, order));
  for (long long flat = 0; flat < total; ++flat) {
    long long rem = flat;
    for (int k = 0; k < order; ++k) {
      idx[k] = static_cast<int>(rem % N);
      rem /= N;
    }
    const auto key = tuple_key(model, idx, order);
    bool zero = true;
    for (double v : key) zero = zero && v == 0.0;
    if (zero) continue;
    auto& cls = classes[key];
    if (cls.ordered_count == 0) {
      cls.key = Eigen::Map<const VectorXd>(key.data(), key.size());
      cls.pair_sums.assign(nsums, 0.0);
    }
    cls.ordered_count += 1;
    if (u) {
      double prod = 1.0;
      for (int k = 0; k < order; ++k) prod *= (*u)[idx[k]];
      cls.u_sum += prod;
    }
    if (order == 4) {
      if (with_gamma) {
        cls.gamma_sum += G(idx[0], idx[2]) * G(idx[1], idx[3]);
      }
      for (int j = 0, pk = 0; j < nf; ++j) {
        for (int k = j; k < nf; ++k, ++pk) {
          double v = forms[j](idx[0], idx[1]) * forms[k](idx[2], idx[3]);
          if (j != k) v += forms[k](idx[0], idx[1]) * forms[j](idx[2], idx[3]);
          cls.pair_sums[pk] += v;
        }
      }
    } else if (vecs) {
      for (int v = 0; v < nv; ++v) {
        for (int f = 0; f < nf; ++f) {
          cls.pair_sums[v * nf + f] +=
              (*vecs)(idx[0], v) * forms[f](idx[1], idx[2]);
        }
      }
    }
  }

  std::vector<BruteClass> out;
  out.reserve(classes.size());
  for (auto& [key, cls] : classes) out.push_back(std::move(cls));
  return out;
}

double explicit_contrast_reml(const VarianceComponents& theta,
                              const ModelSpec& model) {
  const int N = model.n_obs();
  const int p = model.n_fixed();
  const Eigen::HouseholderQR<MatrixXd> qr(model.X);
  const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(N, N);
  const MatrixXd T = Q.rightCols(N - p);
  const MatrixXd V = build_covariance(theta, model);
  const MatrixXd TVT = T.transpose() * V * T;
  const Eigen::LLT<MatrixXd> llt(TVT);
  double logdet = 0.0;
  for (int i = 0; i < N - p; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  const VectorXd ty = T.transpose() * model.y;
  return -0.5 * (logdet + ty.dot(llt.solve(ty)));
}

MatrixXd explicit_contrast_projection(const VarianceComponents& theta,
                                      const ModelSpec& model) {
  const int N = model.n_obs();
  const int p = model.n_fixed();
  const Eigen::HouseholderQR<MatrixXd> qr(model.X);
  const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(N, N);
  const MatrixXd T = Q.rightCols(N - p);
  const MatrixXd V = build_covariance(theta, model);
  const MatrixXd TVT = T.transpose() * V * T;
  return T * TVT.inverse() * T.transpose();
}

VectorXd finite_difference_gradient(
    const std::function<double(const VectorXd&)>& f, const VectorXd& at,
    double step) {
  VectorXd g(at.size());
  for (int i = 0; i < at.size(); ++i) {
    const double h = step * std::max(1.0, std::fabs(at[i]));
    VectorXd hi = at, lo = at;
    hi[i] += h;
    lo[i] -= h;
    g[i] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

}  // namespace poquim::test
