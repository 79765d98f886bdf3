#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "rgp/gp.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using rgp::GpModel;
using rgp::Hyperparameters;
using rgp::TrainingSet;

Hyperparameters makeTheta(int nw, double c, double l, double sf2, double sn2) {
  Hyperparameters th;
  th.c = c;
  th.lengthscales = VectorXd::Constant(nw, l);
  th.sigma_f2 = sf2;
  th.sigma_n2 = sn2;
  return th;
}

TrainingSet randomSet(int n, int nw, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::normal_distribution<double> nd;
  TrainingSet d;
  for (int i = 0; i < n; ++i) {
    VectorXd w(nw);
    for (int j = 0; j < nw; ++j) w(j) = ud(rng);
    d.add(w, 0.3 * nd(rng) + 0.5);
  }
  return d;
}

MatrixXd kernelMatrix(const TrainingSet& d, const Hyperparameters& th) {
  const int n = d.size();
  MatrixXd k(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      k(i, j) = rgp::kernel(d.regressors[i], d.regressors[j], th, i == j);
  return k;
}

TEST(Kernel, SelfValueIsSignalVariance) {
  auto th = makeTheta(4, 0.0, 1.0, 0.26, 1e-4);
  VectorXd w = VectorXd::Constant(4, 0.3);
  EXPECT_NEAR(rgp::kernel(w, w, th, false), 0.26, 1e-15);
  EXPECT_NEAR(rgp::kernel(w, w, th, true), 0.26 + 1e-4, 1e-15);
}

TEST(Kernel, DecaysToNoiseFloor) {
  auto th = makeTheta(2, 0.0, 1.0, 1.0, 0.01);
  VectorXd a = VectorXd::Zero(2), b = VectorXd::Constant(2, 50.0);
  EXPECT_NEAR(rgp::kernel(a, b, th, false), 0.0, 1e-12);
  EXPECT_NEAR(rgp::kernel(a, b, th, true), 0.01, 1e-12);
}

TEST(Kernel, HandValue) {
  auto th = makeTheta(2, 0.0, 1.0, 1.0, 0.0);
  VectorXd a(2), b(2);
  a << 0, 0;
  b << 1, 0;
  EXPECT_NEAR(rgp::kernel(a, b, th, false), std::exp(-0.5), 1e-12);
}

TEST(Kernel, SymmetricExactly) {
  std::mt19937_64 rng(3);
  auto th = makeTheta(4, 0.0, 0.7, 0.5, 0.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    VectorXd a(4), b(4);
    for (int j = 0; j < 4; ++j) {
      a(j) = ud(rng);
      b(j) = ud(rng);
    }
    EXPECT_EQ(rgp::kernel(a, b, th, false), rgp::kernel(b, a, th, false));
  }
}

TEST(Kernel, DimensionMismatchThrows) {
  auto th = makeTheta(3, 0.0, 1.0, 1.0, 0.0);
  EXPECT_THROW(rgp::kernel(VectorXd::Zero(2), VectorXd::Zero(2), th, false),
               rgp::DimensionMismatch);
}

TEST(GpModel, SinglePointAlpha) {
  auto th = makeTheta(2, 0.1, 1.0, 0.5, 0.25);
  TrainingSet d;
  d.add(VectorXd::Constant(2, 0.5), 0.7);
  auto m = GpModel::fit(d, th);
  EXPECT_NEAR(m.alpha()(0), (0.7 - 0.1) / (0.5 + 0.25), 1e-12);
}

TEST(GpModel, AlphaMatchesDenseInverse) {
  std::mt19937_64 rng(5);
  auto th = makeTheta(3, 0.2, 0.5, 0.4, 1e-3);
  auto d = randomSet(3, 3, rng);
  auto m = GpModel::fit(d, th);
  VectorXd z(3);
  for (int i = 0; i < 3; ++i) z(i) = d.outputs[i] - th.c;
  VectorXd want = kernelMatrix(d, th).inverse() * z;
  EXPECT_LT((m.alpha() - want).norm(), 1e-8);
}

TEST(GpModel, InterpolatesWithZeroNoise) {
  std::mt19937_64 rng(7);
  auto th = makeTheta(2, 0.0, 0.4, 1.0, 0.0);
  auto d = randomSet(8, 2, rng);
  auto m = GpModel::fit(d, th);
  for (int i = 0; i < d.size(); ++i) {
    auto [mean, var] = m.posterior(d.regressors[i]);
    EXPECT_NEAR(mean, d.outputs[i], 1e-8);
    EXPECT_NEAR(var, 0.0, 1e-7);
  }
}

TEST(GpModel, FarQueryRecoversPrior) {
  std::mt19937_64 rng(9);
  auto th = makeTheta(2, 0.35, 0.3, 0.8, 1e-4);
  auto d = randomSet(5, 2, rng);
  auto m = GpModel::fit(d, th);
  auto [mean, var] = m.posterior(VectorXd::Constant(2, 100.0));
  EXPECT_NEAR(mean, 0.35, 1e-6);
  EXPECT_NEAR(var, 0.8, 1e-6);
}

TEST(GpModel, EmptyModelReturnsPrior) {
  auto th = makeTheta(2, 0.4, 1.0, 0.7, 0.0);
  auto m = GpModel::fit(TrainingSet{}, th);
  auto [mean, var] = m.posterior(VectorXd::Zero(2));
  EXPECT_EQ(mean, 0.4);
  EXPECT_EQ(var, 0.7);
}

TEST(GpModel, PosteriorMatchesDenseOracle) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 15);
    const int nw = 1 + static_cast<int>(rng() % 4);
    auto th = makeTheta(nw, 0.1 * ud(rng), 0.2 + ud(rng), 0.1 + ud(rng),
                        1e-4 + 1e-3 * ud(rng));
    auto d = randomSet(n, nw, rng);
    auto m = GpModel::fit(d, th);

    MatrixXd k = kernelMatrix(d, th);
    MatrixXd kinv = k.inverse();
    VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = d.outputs[i] - th.c;

    VectorXd w(nw);
    for (int j = 0; j < nw; ++j) w(j) = ud(rng);
    VectorXd ks(n);
    for (int i = 0; i < n; ++i)
      ks(i) = rgp::kernel(w, d.regressors[i], th, false);
    const double wantMean = th.c + ks.dot(kinv * z);
    const double wantVar = th.sigma_f2 - ks.dot(kinv * ks);

    auto [mean, var] = m.posterior(w);
    EXPECT_NEAR(mean, wantMean, 1e-8);
    EXPECT_NEAR(var, std::max(wantVar, 0.0), 1e-8);
    EXPECT_GE(var, 0.0);

    const double wantLl = -0.5 * z.dot(kinv * z) -
                          0.5 * std::log(k.determinant()) -
                          0.5 * n * std::log(2.0 * M_PI);
    EXPECT_NEAR(rgp::logMarginalLikelihood(d, th), wantLl, 1e-8);
  }
}

TEST(LogMarginalLikelihood, UnitScalarCase) {
  Hyperparameters th = makeTheta(1, 0.5, 1.0, 0.5, 0.5);
  TrainingSet d;
  d.add(VectorXd::Zero(1), 0.5);  // z = c, K = sigma_f2 + sigma_n2 = 1
  EXPECT_NEAR(rgp::logMarginalLikelihood(d, th),
              -0.5 * std::log(2.0 * M_PI), 1e-12);
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double maxRel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int nw = 2 + static_cast<int>(rng() % 3);
    auto th = makeTheta(nw, 0.2 * ud(rng), 0.3 + ud(rng), 0.2 + ud(rng),
                        1e-4);
    auto d = randomSet(6 + static_cast<int>(rng() % 10), nw, rng);
    auto m = GpModel::fit(d, th);
    VectorXd w(nw);
    for (int j = 0; j < nw; ++j) w(j) = ud(rng);

    VectorXd g = m.posteriorMeanGradient(w);
    const double h = 1e-5;
    VectorXd fd(nw);
    for (int j = 0; j < nw; ++j) {
      VectorXd wp = w, wm = w;
      wp(j) += h;
      wm(j) -= h;
      fd(j) = (m.posteriorMean(wp) - m.posteriorMean(wm)) / (2.0 * h);
    }
    const double scale = std::max(g.norm(), 1e-6);
    maxRel = std::max(maxRel, (g - fd).norm() / scale);
  }
  EXPECT_LT(maxRel, 1e-6);
}

TEST(Gradient, VanishesAtLonePoint) {
  auto th = makeTheta(3, 0.0, 0.5, 1.0, 0.0);
  TrainingSet d;
  VectorXd w = VectorXd::Constant(3, 0.4);
  d.add(w, 0.9);
  auto m = GpModel::fit(d, th);
  EXPECT_LT(m.posteriorMeanGradient(w).norm(), 1e-14);
}

TEST(Optimize, ZeroBudgetReturnsStart) {
  std::mt19937_64 rng(19);
  auto th = makeTheta(2, 0.1, 0.5, 0.3, 1e-4);
  auto d = randomSet(8, 2, rng);
  auto fit = rgp::optimizeHyperparameters(d, th, 0);
  EXPECT_EQ(fit.theta.c, th.c);
  EXPECT_EQ(fit.theta.sigma_f2, th.sigma_f2);
  EXPECT_EQ(fit.theta.lengthscales, th.lengthscales);
}

TEST(Optimize, NeverWorseThanStart) {
  std::mt19937_64 rng(23);
  auto th = makeTheta(2, 0.0, 1.0, 1.0, 1e-4);
  auto d = randomSet(12, 2, rng);
  const double ll0 = rgp::logMarginalLikelihood(d, th);
  auto fit = rgp::optimizeHyperparameters(d, th, 2000, 4, 1);
  EXPECT_GE(fit.loglik, ll0);
  EXPECT_NEAR(rgp::logMarginalLikelihood(d, fit.theta), fit.loglik, 1e-10);
}

TEST(Optimize, RecoversGeneratingLengthscales) {
  // Draw data from a known GP and check the fitted lengthscales land near
  // the generating ones.
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::normal_distribution<double> nd;
  const int n = 40, nw = 2;
  auto gen = makeTheta(nw, 0.0, 0.25, 1.0, 1e-4);

  TrainingSet d;
  for (int i = 0; i < n; ++i) {
    VectorXd w(nw);
    for (int j = 0; j < nw; ++j) w(j) = ud(rng);
    d.add(w, 0.0);
  }
  MatrixXd k = kernelMatrix(d, gen);
  Eigen::LLT<MatrixXd> llt(k);
  VectorXd u(n);
  for (int i = 0; i < n; ++i) u(i) = nd(rng);
  VectorXd z = llt.matrixL() * u;
  for (int i = 0; i < n; ++i) d.outputs[i] = z(i);

  auto start = makeTheta(nw, 0.0, 1.0, 0.5, 1e-4);
  auto fit = rgp::optimizeHyperparameters(d, start, 8000, 8, 2);
  for (int j = 0; j < nw; ++j) {
    EXPECT_GT(fit.theta.lengthscales(j), 0.25 * 0.5);
    EXPECT_LT(fit.theta.lengthscales(j), 0.25 * 2.0);
  }
  EXPECT_EQ(fit.theta.sigma_n2, 1e-4);  // stays fixed
}

}  // namespace
