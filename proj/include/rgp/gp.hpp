#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "rgp/chol.hpp"
#include "rgp/detail/neldermead.hpp"
#include "rgp/errors.hpp"

namespace rgp {

/// Kernel constants for the ARD squared-exponential covariance plus a
/// constant prior mean.
struct Hyperparameters {
  double c = 0.0;                 // prior mean (normalized output units)
  Eigen::VectorXd lengthscales;   // one per regressor dimension, > 0
  double sigma_f2 = 1.0;          // signal variance
  double sigma_n2 = 0.0;          // noise variance

  void validate() const {
    if (lengthscales.size() == 0 || (lengthscales.array() <= 0.0).any())
      throw DimensionMismatch("hyperparameters: lengthscales must be > 0");
    if (!(sigma_f2 > 0.0) || sigma_n2 < 0.0)
      throw DimensionMismatch("hyperparameters: bad variance");
  }
};

/// Ordered regressor/output pairs; insertion order is significant (FIFO
/// eviction works on it).
struct TrainingSet {
  std::vector<Eigen::VectorXd> regressors;
  std::vector<double> outputs;

  int size() const { return static_cast<int>(outputs.size()); }
  void add(const Eigen::VectorXd& w, double z) {
    regressors.push_back(w);
    outputs.push_back(z);
  }
};

inline double kernel(const Eigen::VectorXd& wi, const Eigen::VectorXd& wj,
                     const Hyperparameters& th, bool same_index) {
  if (wi.size() != wj.size() || wi.size() != th.lengthscales.size())
    throw DimensionMismatch("kernel: regressor dimension");
  const double q =
      ((wi - wj).array() / th.lengthscales.array()).square().sum();
  return th.sigma_f2 * std::exp(-0.5 * q) + (same_index ? th.sigma_n2 : 0.0);
}

/// Fitted GP: training set, hyperparameters, cached Cholesky factor of the
/// kernel matrix and the weight vector alpha = K^{-1}(z - c 1).
class GpModel {
 public:
  GpModel() = default;

  static GpModel fit(TrainingSet data, Hyperparameters theta) {
    theta.validate();
    GpModel m;
    m.data_ = std::move(data);
    m.theta_ = std::move(theta);
    const int n = m.data_.size();
    if (n > 0) {
      Eigen::MatrixXd k(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          k(i, j) = kernel(m.data_.regressors[i], m.data_.regressors[j],
                           m.theta_, i == j);
          k(j, i) = k(i, j);
        }
      m.factor_ = CholFactor::factorize(k, jitter(m.theta_));
      m.refreshAlpha();
    }
    return m;
  }

  const TrainingSet& data() const { return data_; }
  const Hyperparameters& theta() const { return theta_; }
  const CholFactor& factor() const { return factor_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  int size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  /// Posterior mean and variance at w. An empty model returns the prior
  /// (c, sigma_f2). Variance is clamped at zero.
  std::pair<double, double> posterior(const Eigen::VectorXd& w) const {
    if (w.size() != theta_.lengthscales.size())
      throw DimensionMismatch("posterior: regressor dimension");
    const int n = size();
    if (n == 0) return {theta_.c, theta_.sigma_f2};
    Eigen::VectorXd ks(n);
    for (int i = 0; i < n; ++i)
      ks(i) = kernel(w, data_.regressors[i], theta_, false);
    const double mean = theta_.c + ks.dot(alpha_);
    const Eigen::VectorXd beta = factor_.solve(ks);
    double var = kernel(w, w, theta_, false) - ks.dot(beta);
    return {mean, std::max(var, 0.0)};
  }

  double posteriorMean(const Eigen::VectorXd& w) const {
    if (w.size() != theta_.lengthscales.size())
      throw DimensionMismatch("posteriorMean: regressor dimension");
    const int n = size();
    if (n == 0) return theta_.c;
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += alpha_(i) * kernel(w, data_.regressors[i], theta_, false);
    return theta_.c + acc;
  }

  /// Analytic gradient of the posterior mean: sum_i alpha_i k*(w,w_i)
  /// Lambda (w_i - w), with Lambda = diag(1/l^2) and k* noise-free.
  Eigen::VectorXd posteriorMeanGradient(const Eigen::VectorXd& w) const {
    if (w.size() != theta_.lengthscales.size())
      throw DimensionMismatch("posteriorMeanGradient: regressor dimension");
    const Eigen::ArrayXd invL2 =
        theta_.lengthscales.array().square().inverse();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
    for (int i = 0; i < size(); ++i) {
      const double ks = kernel(w, data_.regressors[i], theta_, false);
      g.array() +=
          alpha_(i) * ks * invL2 * (data_.regressors[i] - w).array();
    }
    return g;
  }

  /// Model over the current set plus one appended point, built with the
  /// recursive factor insert. Equivalent to a fresh fit.
  GpModel withPoint(const Eigen::VectorXd& w, double z) const {
    if (w.size() != theta_.lengthscales.size())
      throw DimensionMismatch("withPoint: regressor dimension");
    GpModel m;
    m.data_ = data_;
    m.theta_ = theta_;
    const int n = size();
    Eigen::VectorXd col(n);
    for (int i = 0; i < n; ++i)
      col(i) = kernel(w, data_.regressors[i], theta_, false);
    m.factor_ = factor_;
    m.factor_.insertBack(col, kernel(w, w, theta_, true));
    m.data_.add(w, z);
    m.refreshAlpha();
    return m;
  }

  /// Model with the earliest-inserted point removed (factor downdate at 0).
  GpModel evictOldest() const {
    if (empty()) throw EmptySet("evictOldest: empty model");
    GpModel m;
    m.theta_ = theta_;
    m.data_.regressors.assign(data_.regressors.begin() + 1,
                              data_.regressors.end());
    m.data_.outputs.assign(data_.outputs.begin() + 1, data_.outputs.end());
    m.factor_ = factor_.removed(0);
    m.refreshAlpha();
    return m;
  }

 private:
  static double jitter(const Hyperparameters& th) {
    return 1e-10 * th.sigma_f2;
  }

  void refreshAlpha() {
    const int n = data_.size();
    if (n == 0) {
      alpha_.resize(0);
      return;
    }
    Eigen::VectorXd r =
        Eigen::Map<const Eigen::VectorXd>(data_.outputs.data(), n).array() -
        theta_.c;
    alpha_ = factor_.solve(r);
  }

  TrainingSet data_;
  Hyperparameters theta_;
  CholFactor factor_;
  Eigen::VectorXd alpha_;
};

inline double logMarginalLikelihood(const TrainingSet& data,
                                    const Hyperparameters& theta) {
  const int n = data.size();
  if (n == 0) throw EmptySet("logMarginalLikelihood: empty set");
  GpModel m = GpModel::fit(data, theta);
  Eigen::VectorXd r =
      Eigen::Map<const Eigen::VectorXd>(data.outputs.data(), n).array() -
      theta.c;
  const double quad = r.dot(m.alpha());
  return -0.5 * quad - 0.5 * m.factor().logDet() -
         0.5 * n * std::log(2.0 * M_PI);
}

struct HyperparameterFit {
  Hyperparameters theta;
  double loglik = 0.0;
  bool converged = false;
  int evaluations = 0;
};

/// Maximizes the log marginal likelihood over (c, log l, log sigma_f2) with
/// multi-start Nelder-Mead; sigma_n2 stays fixed at its theta0 value.
inline HyperparameterFit optimizeHyperparameters(const TrainingSet& data,
                                                 const Hyperparameters& theta0,
                                                 int budget,
                                                 int starts = 8,
                                                 std::uint64_t seed = 0) {
  theta0.validate();
  const int nw = static_cast<int>(theta0.lengthscales.size());
  const int d = nw + 2;

  auto pack = [&](const Hyperparameters& th) {
    Eigen::VectorXd x(d);
    x(0) = th.c;
    for (int i = 0; i < nw; ++i) x(1 + i) = std::log(th.lengthscales(i));
    x(d - 1) = std::log(th.sigma_f2);
    return x;
  };
  auto unpack = [&](const Eigen::VectorXd& x) {
    Hyperparameters th = theta0;
    th.c = x(0);
    for (int i = 0; i < nw; ++i) th.lengthscales(i) = std::exp(x(1 + i));
    th.sigma_f2 = std::exp(x(d - 1));
    return th;
  };
  auto negLoglik = [&](const Eigen::VectorXd& x) {
    if (x.segment(1, nw + 1).lpNorm<Eigen::Infinity>() > 20.0) return 1e12;
    try {
      return -logMarginalLikelihood(data, unpack(x));
    } catch (const NotPositiveDefinite&) {
      return 1e12;
    }
  };

  HyperparameterFit best;
  best.theta = theta0;
  best.loglik = logMarginalLikelihood(data, theta0);
  if (budget <= 0) return best;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const int evalsPerStart = std::max(budget / std::max(starts, 1), 1);
  for (int s = 0; s < starts; ++s) {
    Eigen::VectorXd x0 = pack(theta0);
    if (s > 0)
      for (int i = 0; i < d; ++i) x0(i) += nd(rng);
    auto r = detail::nelderMead(negLoglik, x0, 0.3, evalsPerStart);
    best.evaluations += r.evaluations;
    if (-r.value > best.loglik) {
      best.loglik = -r.value;
      best.theta = unpack(r.x);
      best.converged = r.converged;
    }
  }
  return best;
}

}  // namespace rgp
