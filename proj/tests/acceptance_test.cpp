// Acceptance gate: one criterion per invocation (--criterion N), one
// PASS/FAIL line each, tolerances pinned in code. Exit 0 iff the criterion
// holds.

#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <string>
#include <thread>

#include "rgp/experiments.hpp"
#include "rgp/io.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

int g_threads = static_cast<int>(std::thread::hardware_concurrency());

struct Check {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// 1: recursive insert/remove factors match full refactorization.
Check criterion1() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 49);  // 2..50
    MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = nd(rng);
    MatrixXd a = m.transpose() * m + n * MatrixXd::Identity(n, n);

    const int pos = static_cast<int>(rng() % n);
    // Remove row/col pos, refactor both ways.
    MatrixXd red(n - 1, n - 1);
    for (int i = 0, ri = 0; i < n; ++i) {
      if (i == pos) continue;
      for (int j = 0, rj = 0; j < n; ++j) {
        if (j == pos) continue;
        red(ri, rj++) = a(i, j);
      }
      ++ri;
    }
    auto full = rgp::CholFactor::factorize(a);
    auto removed = full.removed(pos);
    auto fullRed = rgp::CholFactor::factorize(red);
    worst = std::max(worst, (removed.upper() - fullRed.upper()).norm() /
                                fullRed.upper().norm());

    // Insert the removed column back at a random position.
    const int ins = static_cast<int>(rng() % n);
    MatrixXd grown(n, n);
    std::vector<int> map;  // grown index -> source index in a
    for (int i = 0, ri = 0; i < n; ++i) {
      if (i == pos) continue;
      map.push_back(i);
      (void)ri;
    }
    map.insert(map.begin() + ins, pos);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) grown(i, j) = a(map[i], map[j]);
    VectorXd col(n - 1);
    for (int i = 0, ri = 0; i < n; ++i) {
      if (i == ins) continue;
      col(ri++) = grown(i, ins);
    }
    auto inserted = removed.inserted(col, grown(ins, ins), ins);
    auto fullGrown = rgp::CholFactor::factorize(grown);
    worst = std::max(worst, (inserted.upper() - fullGrown.upper()).norm() /
                                fullGrown.upper().norm());
  }
  const double dt = seconds_since(t0);
  c.require(worst < 1e-10, "max relative factor error " +
                               std::to_string(worst) + " >= 1e-10");
  c.require(dt < 10.0, "runtime " + std::to_string(dt) + "s >= 10s");
  c.detail += (c.detail.empty() ? "" : "; ") + std::string("worst=") +
              std::to_string(worst) + " t=" + std::to_string(dt) + "s";
  return c;
}

// 2: posterior and log marginal likelihood vs dense-inverse oracles;
// analytic mean gradient vs finite differences.
Check criterion2() {
  Check c;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double worstPost = 0.0, worstLik = 0.0, worstGrad = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 30);
    rgp::Hyperparameters th;
    th.c = 0.2 + 0.6 * ud(rng);
    th.lengthscales = VectorXd::Constant(4, 0.2 + 0.6 * ud(rng));
    th.sigma_f2 = 0.05 + 0.5 * ud(rng);
    th.sigma_n2 = 1e-4 + 1e-3 * ud(rng);
    rgp::TrainingSet d;
    for (int i = 0; i < n; ++i) {
      VectorXd w(4);
      for (int j = 0; j < 4; ++j) w(j) = ud(rng);
      d.add(w, ud(rng));
    }
    auto m = rgp::GpModel::fit(d, th);

    MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        K(i, j) = rgp::kernel(d.regressors[i], d.regressors[j], th, i == j);
    const MatrixXd Kinv = K.inverse();
    VectorXd r(n);
    for (int i = 0; i < n; ++i) r(i) = d.outputs[i] - th.c;

    VectorXd w(4);
    for (int j = 0; j < 4; ++j) w(j) = ud(rng);
    VectorXd ks(n);
    for (int i = 0; i < n; ++i)
      ks(i) = rgp::kernel(w, d.regressors[i], th, false);
    const double meanO = th.c + ks.dot(Kinv * r);
    const double varO = th.sigma_f2 - ks.dot(Kinv * ks);
    auto [mean, var] = m.posterior(w);
    worstPost = std::max({worstPost, std::abs(mean - meanO),
                          std::abs(var - std::max(varO, 0.0))});

    const double likO =
        -0.5 * r.dot(Kinv * r) -
        0.5 * std::log(K.determinant()) -
        0.5 * n * std::log(2.0 * M_PI);
    worstLik =
        std::max(worstLik, std::abs(rgp::logMarginalLikelihood(d, th) - likO));

    const VectorXd g = m.posteriorMeanGradient(w);
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
      VectorXd wp = w, wm = w;
      wp(j) += h;
      wm(j) -= h;
      const double fd = (m.posteriorMean(wp) - m.posteriorMean(wm)) / (2 * h);
      worstGrad = std::max(
          worstGrad, std::abs(g(j) - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  c.require(worstPost < 1e-8,
            "posterior error " + std::to_string(worstPost));
  c.require(worstLik < 1e-8, "loglik error " + std::to_string(worstLik));
  c.require(worstGrad < 1e-6, "gradient error " + std::to_string(worstGrad));
  return c;
}

// 3: regenerated local sets pass held-out cross-validation thresholds.
Check criterion3() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  auto sc = rgp::buildScenario(2, 4000);
  rgp::ChirpSpec chirp;
  rgp::NoiseSpec noise;
  auto test_raw = rgp::generateRaw({sc.u0, sc.u_ref}, chirp, sc.plant, noise,
                                   sc.nm, 0.5, 2 + 77);
  const double radius = 0.06;
  for (auto set : {rgp::InitialSet::d0, rgp::InitialSet::dref,
                   rgp::InitialSet::dcomb}) {
    auto test =
        set == rgp::InitialSet::dcomb
            ? rgp::unionOf(
                  rgp::extractLocal(test_raw, sc.y0, radius, 0.0, sc.nm),
                  rgp::extractLocal(test_raw, sc.y_ref, radius, 0.0, sc.nm))
            : rgp::extractLocal(
                  test_raw, set == rgp::InitialSet::d0 ? sc.y0 : sc.y_ref,
                  radius, 0.0, sc.nm);
    auto m = rgp::GpModel::fit(rgp::setOf(sc, set), rgp::thetaOf(sc, set));
    int err_ok = 0, sig_ok = 0;
    for (int i = 0; i < test.size(); ++i) {
      auto [mean, var] = m.posterior(test.regressors[i]);
      if (std::abs(test.outputs[i] - mean) * sc.nm.yRange() < 0.02) ++err_ok;
      if (std::sqrt(std::max(var, 0.0)) * sc.nm.yRange() < 5e-3) ++sig_ok;
    }
    const double fe = double(err_ok) / test.size();
    const double fs = double(sig_ok) / test.size();
    c.require(fe >= 0.95, std::string(rgp::setName(set)) +
                              " |e^p| fraction " + std::to_string(fe));
    c.require(fs >= 0.95, std::string(rgp::setName(set)) +
                              " sigma fraction " + std::to_string(fs));
  }
  const double dt = seconds_since(t0);
  c.require(dt < 120.0, "runtime " + std::to_string(dt) + "s");
  return c;
}

// 4: constant-input steady states against the published operating points.
Check criterion4() {
  Check c;
  rgp::CstrParams p;
  for (auto [u, y] : {std::pair{353.5, 0.6}, std::pair{356.0, 0.439}}) {
    rgp::CstrState s{0.5, 350.0, u};
    for (int k = 0; k < 4000; ++k) s = rgp::step(s, u, 0.5, p);
    c.require(std::abs(s.CA - y) < 0.005,
              std::to_string(u) + " K -> " + std::to_string(s.CA) +
                  " mol/l, expected " + std::to_string(y));
  }
  return c;
}

// 5: noise-free closed-loop optimal value is non-increasing under updates.
Check criterion5() {
  Check c;
  auto sc = rgp::buildScenario(1, 4000);
  auto cfg = rgp::makeRunConfig(sc, rgp::Controller::rgp,
                                rgp::InitialSet::dcomb,
                                {0.0, 0.0, 1 << 30}, 0);
  cfg.noise.sigma_n2 = 0.0;
  cfg.schedule = {sc.y_ref, sc.y_ref, 0.0};  // regulate to the reference
  auto res = rgp::runClosedLoop(cfg);
  c.require(!res.infeasible && !res.violated, "run failed or violated");
  for (size_t k = 1; k < res.records.size(); ++k) {
    const double prev = res.records[k - 1].v_star;
    const double cur = res.records[k].v_star;
    if (cur > prev + 1e-4) {
      c.require(false, "V* increase at k=" + std::to_string(k) + ": " +
                           std::to_string(prev) + " -> " +
                           std::to_string(cur));
      break;
    }
  }
  return c;
}

// 6: controller-comparison ordering, magnitude, and gap.
Check criterion6() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  auto sc = rgp::buildScenario(1, 4000);
  auto rows =
      rgp::compareControllers(sc, 50, 1, g_threads, {0.01, 2e-5, 1 << 30});
  auto v = [&](const std::string& ctrl, const std::string& set) {
    for (const auto& r : rows)
      if (r.controller == ctrl && r.set == set) return r.v_bar;
    return -1.0;
  };
  const double ompc = v("oMPC", "-");
  c.require(ompc >= 50.0 && ompc <= 70.0,
            "V(oMPC)=" + std::to_string(ompc) + " outside [50,70]");
  for (const char* set : {"D0", "Dref"}) {
    const double b = v("bGP", set), r = v("rGP", set);
    c.require(ompc <= r + 1e-9 && r <= b + 1e-9,
              std::string(set) + " ordering oMPC<=rGP<=bGP violated: " +
                  std::to_string(ompc) + ", " + std::to_string(r) + ", " +
                  std::to_string(b));
  }
  const double gap = v("bGP", "Dref") - v("rGP", "Dref");
  c.require(gap >= 10.0, "Dref gap " + std::to_string(gap) + " < 10");
  const double dt = seconds_since(t0);
  c.require(dt < 1800.0, "runtime " + std::to_string(dt) + "s");
  c.detail += (c.detail.empty() ? "" : "; ") + std::string("oMPC=") +
              std::to_string(ompc) + " gap=" + std::to_string(gap);
  return c;
}

// 7: terminal design on the published linear model vs the published (k, P).
Check criterion7() {
  Check c;
  rgp::LinearModel lin;
  lin.A = MatrixXd::Zero(3, 3);
  lin.A.row(0) << 0.162, 0.005, -0.012;
  lin.A(1, 0) = 1.0;
  lin.A(2, 1) = 1.0;
  lin.b = Vector3d(-0.034, 0.0, 0.0);
  std::vector<rgp::HalfSpace> states;
  for (int i = 0; i < 3; ++i) {
    VectorXd e = VectorXd::Zero(3);
    e(i) = 1.0;
    states.push_back({e, 0.75});
    states.push_back({-e, 0.2478});
  }
  std::vector<double> inputs{16.0 / 37.0, 21.0 / 37.0};
  const auto t0 = std::chrono::steady_clock::now();
  auto tp = rgp::designTerminal(lin, states, inputs);
  const double dt = seconds_since(t0);

  const Vector3d kPub(1.745, 0.082, -0.001);
  MatrixXd pPub(3, 3);
  pPub << 16.38, -0.556, -0.066, -0.556, 16.32, -0.554, -0.066, -0.554,
      16.30;
  for (int i = 0; i < 3; ++i)
    c.require(std::abs(tp.k(i) - kPub(i)) <= 0.05 * std::abs(kPub(i)),
              "k" + std::to_string(i) + "=" + std::to_string(tp.k(i)) +
                  " vs " + std::to_string(kPub(i)));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      c.require(
          std::abs(tp.P(i, j) - pPub(i, j)) <= 0.05 * std::abs(pPub(i, j)),
          "P" + std::to_string(i) + std::to_string(j) + "=" +
              std::to_string(tp.P(i, j)) + " vs " +
              std::to_string(pPub(i, j)));

  const MatrixXd acl = lin.A + lin.b * tp.k.transpose();
  c.require(rgp::spectralRadius(acl) < 1.0, "closed loop not contractive");
  for (const auto& hs : states)
    c.require(std::sqrt(hs.q.dot(tp.G * hs.q)) <= hs.r + 1e-6,
              "state containment violated");
  const double kmax = std::sqrt(tp.k.dot(tp.G * tp.k));
  for (double t : inputs)
    c.require(kmax <= t + 1e-6, "input containment violated");
  c.require(dt < 5.0, "runtime " + std::to_string(dt) + "s");
  return c;
}

// 8: capacity-limited rGP within 15% of unbounded rGP on identical seeds.
Check criterion8() {
  Check c;
  auto sc = rgp::buildScenario(1, 4000);
  auto run = [&](int capacity) {
    return rgp::meanCost(rgp::replicate(
        [&](std::uint64_t seed) {
          return rgp::makeRunConfig(sc, rgp::Controller::rgp,
                                    rgp::InitialSet::dref,
                                    {0.01, 2e-5, capacity}, seed);
        },
        50, 1, g_threads));
  };
  const double vInf = run(1 << 30);
  const double vM = run(40);
  c.require(std::abs(vM - vInf) <= 0.15 * vInf,
            "V(M=40)=" + std::to_string(vM) + " vs unbounded " +
                std::to_string(vInf));
  c.detail += (c.detail.empty() ? "" : "; ") + std::string("V(M=40)=") +
              std::to_string(vM) + " V(inf)=" + std::to_string(vInf);
  return c;
}

// 9: recursive insert beats full refactorization, speedup monotone in n.
Check criterion9() {
  Check c;
  auto rows = rgp::benchChol({100, 200, 400}, 21, 1);
  double prev = 0.0;
  for (const auto& r : rows) {
    const double sp = r.t_full / r.t_insert;
    c.require(r.t_insert < r.t_full,
              "n=" + std::to_string(r.n) + " insert not faster");
    c.require(sp > prev, "speedup not monotone at n=" + std::to_string(r.n));
    prev = sp;
    c.detail += " n=" + std::to_string(r.n) + " x" + std::to_string(sp);
  }
  return c;
}

// 10: feasible-cell count decreases as the realized prediction-error level
// grows with noise.
Check criterion10() {
  Check c;
  auto sc = rgp::buildScenario(1, 4000);
  std::vector<double> y0_grid, noise_grid;
  for (double y = 0.45; y <= 0.631; y += 0.02) y0_grid.push_back(y);
  for (int i = 0; i < 6; ++i) noise_grid.push_back(0.003 + i * 0.0018);
  auto cells = rgp::roaSweep(sc, rgp::InitialSet::dref, y0_grid, noise_grid,
                             30, 1, g_threads);
  std::vector<double> feas, mu;
  for (double sn : noise_grid) {
    int f = 0;
    double m = 0.0;
    for (const auto& cell : cells)
      if (cell.sigma_n == sn) {
        f += cell.feasible ? 1 : 0;
        m = std::max(m, cell.mu);
      }
    feas.push_back(f);
    mu.push_back(m);
    c.detail += " s=" + std::to_string(sn).substr(0, 6) + ":" +
                std::to_string(f) + "/" + std::to_string(y0_grid.size());
  }
  const double rho = rgp::spearman(mu, feas);
  c.require(rho <= -0.8, "Spearman " + std::to_string(rho) + " > -0.8");
  c.detail += " rho=" + std::to_string(rho);
  return c;
}

// 11: value gate rejects outlier updates; ungated runs disperse.
Check criterion11() {
  Check c;
  auto sc = rgp::buildScenario(1, 4000);
  auto rep = rgp::outlierStudy(sc, rgp::InitialSet::dref,
                               {7.0, 10.0, 12.5, 20.0}, 50, 1, g_threads);
  c.require(rep.gated_converged == 50,
            "gated converged " + std::to_string(rep.gated_converged) +
                "/50");
  c.require(rep.ungated_dispersion >= 2.0 * rep.gated_dispersion,
            "dispersion gated=" + std::to_string(rep.gated_dispersion) +
                " ungated=" + std::to_string(rep.ungated_dispersion));
  c.detail += (c.detail.empty() ? "" : "; ") + std::string("disp gated=") +
              std::to_string(rep.gated_dispersion) +
              " ungated=" + std::to_string(rep.ungated_dispersion);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  int criterion = 0;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0)
      criterion = std::atoi(argv[i + 1]);
    if (std::strcmp(argv[i], "--threads") == 0)
      g_threads = std::atoi(argv[i + 1]);
  }
  if (criterion < 1 || criterion > 11) {
    std::fprintf(stderr, "usage: acceptance_test --criterion <1..11>\n");
    return 1;
  }
  Check (*fns[])() = {criterion1, criterion2, criterion3, criterion4,
                      criterion5, criterion6, criterion7, criterion8,
                      criterion9, criterion10, criterion11};
  Check c = fns[criterion - 1]();
  std::printf("criterion %d: %s%s%s\n", criterion, c.ok ? "PASS" : "FAIL",
              c.detail.empty() ? "" : " — ", c.detail.c_str());
  return c.ok ? 0 : 1;
}
