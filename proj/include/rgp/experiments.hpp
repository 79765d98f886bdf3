#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <numeric>
#include <thread>
#include <vector>

#include "rgp/chol.hpp"
#include "rgp/closedloop.hpp"
#include "rgp/cstr.hpp"
#include "rgp/gp.hpp"
#include "rgp/terminal.hpp"

namespace rgp {

/// Runs fn(0..n-1) on a fixed-size worker pool; results must be written to
/// per-index slots by the caller.
inline void parallelFor(int n, int threads,
                        const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

enum class InitialSet { d0, dref, dcomb };

inline const char* setName(InitialSet s) {
  switch (s) {
    case InitialSet::d0: return "D0";
    case InitialSet::dref: return "Dref";
    default: return "Dcomb";
  }
}

/// Everything the closed-loop studies need: the three training sets with
/// fitted hyperparameters, the terminal pair, and the operating points.
struct Scenario {
  Normalizer nm;
  CstrParams plant;
  TrainingSet raw, d0, dref, dcomb;
  Hyperparameters th_d0, th_dref, th_dcomb;
  TerminalPair terminal;  // normalized units (cost runs on scaled deviations)
  double y0 = 0.6, y_ref = 0.439;
  double u0 = 0.0, u_ref = 0.0;
};

inline Hyperparameters defaultThetaStart(const TrainingSet& d) {
  Hyperparameters th;
  const int n = d.size();
  double mean = 0.0;
  for (double z : d.outputs) mean += z;
  mean /= std::max(n, 1);
  th.c = mean;
  th.lengthscales = Eigen::VectorXd::Constant(4, 0.3);
  th.sigma_f2 = 0.1;
  th.sigma_n2 = (0.003 / 0.3) * (0.003 / 0.3);  // known noise, normalized
  return th;
}

inline Scenario buildScenario(std::uint64_t seed, int fit_budget = 4000,
                              double radius = 0.06) {
  Scenario sc;
  sc.u0 = inputForOutput(sc.y0, sc.plant);
  sc.u_ref = inputForOutput(sc.y_ref, sc.plant);

  ChirpSpec chirp;
  NoiseSpec noise;
  sc.raw = generateRaw({sc.u0, sc.u_ref}, chirp, sc.plant, noise, sc.nm,
                       0.5, seed);
  sc.d0 = extractLocalSized(sc.raw, sc.y0, radius, 40, sc.nm);
  sc.dref = extractLocalSized(sc.raw, sc.y_ref, radius, 40, sc.nm);
  sc.dcomb = unionOf(sc.d0, sc.dref);

  sc.th_d0 =
      optimizeHyperparameters(sc.d0, defaultThetaStart(sc.d0), fit_budget, 8,
                              seed + 1)
          .theta;
  sc.th_dref =
      optimizeHyperparameters(sc.dref, defaultThetaStart(sc.dref),
                              fit_budget, 8, seed + 2)
          .theta;
  sc.th_dcomb =
      optimizeHyperparameters(sc.dcomb, defaultThetaStart(sc.dcomb),
                              fit_budget, 8, seed + 3)
          .theta;

  // Terminal ingredients from the reference-local model.
  auto mref = GpModel::fit(sc.dref, sc.th_dref);
  auto wref = regressorOf(NarxState::constant(sc.y_ref), sc.u_ref, sc.nm);
  auto lin = linearize(mref, wref);
  sc.terminal = designTerminalForBoxes(lin, sc.nm, sc.y_ref, sc.u_ref);
  return sc;
}

inline const TrainingSet& setOf(const Scenario& sc, InitialSet s) {
  switch (s) {
    case InitialSet::d0: return sc.d0;
    case InitialSet::dref: return sc.dref;
    default: return sc.dcomb;
  }
}

inline const Hyperparameters& thetaOf(const Scenario& sc, InitialSet s) {
  switch (s) {
    case InitialSet::d0: return sc.th_d0;
    case InitialSet::dref: return sc.th_dref;
    default: return sc.th_dcomb;
  }
}

inline OcpSpec specOf(const Scenario& sc) {
  OcpSpec spec = OcpSpec::defaults();
  // Quadratic weights act on scaled deviations; the output scale calibrates
  // the accumulated-cost magnitude, the input scale is the actuator range.
  // The terminal pair stays in normalized units and the gain converts to an
  // original-units law.
  spec.y_scale = 0.5;
  spec.u_scale = sc.nm.uRange();
  spec.P = sc.terminal.P;
  spec.k_gain = sc.terminal.k * sc.nm.uRange() / sc.nm.yRange();
  spec.x_ref = NarxState::constant(sc.y_ref);
  spec.u_ref = sc.u_ref;
  spec.nm = sc.nm;
  return spec;
}

inline ClosedLoopConfig makeRunConfig(const Scenario& sc,
                                      Controller controller, InitialSet set,
                                      const EvolvingConfig& thresholds,
                                      std::uint64_t seed,
                                      int n_steps = 60) {
  ClosedLoopConfig cfg;
  cfg.controller = controller;
  if (controller != Controller::ompc)
    cfg.model = GpModel::fit(setOf(sc, set), thetaOf(sc, set));
  cfg.spec = specOf(sc);
  cfg.thresholds = thresholds;
  cfg.plant = sc.plant;
  cfg.n_steps = n_steps;
  cfg.y_start = sc.y0;
  cfg.schedule = {sc.y0, sc.y_ref, 5.0};
  cfg.seed = seed;
  return cfg;
}

struct RunSummary {
  double cost = 0.0;
  bool violated = false;
  bool infeasible = false;
  int accepted = 0;
  int candidates = 0;
  double max_abs_ep = 0.0;
  double y_final = 0.0;
  std::vector<double> y;  // measured trajectory
};

inline RunSummary summarize(const ClosedLoopResult& res) {
  RunSummary s;
  s.cost = res.cost_sum;
  s.violated = res.violated;
  s.infeasible = res.infeasible;
  for (const auto& r : res.records) {
    if (r.gate == 1) ++s.accepted;
    if (r.candidate) ++s.candidates;
    s.max_abs_ep = std::max(s.max_abs_ep, std::abs(r.e_p));
    s.y.push_back(r.y);
  }
  if (!s.y.empty()) s.y_final = s.y.back();
  return s;
}

/// Monte Carlo replication: same controller/config over seeds base+i.
inline std::vector<RunSummary> replicate(
    const std::function<ClosedLoopConfig(std::uint64_t)>& makeCfg, int n_sim,
    std::uint64_t base_seed, int threads) {
  std::vector<RunSummary> out(n_sim);
  parallelFor(n_sim, threads, [&](int i) {
    auto cfg = makeCfg(base_seed + i);
    out[i] = summarize(runClosedLoop(cfg));
  });
  return out;
}

inline double meanCost(const std::vector<RunSummary>& runs) {
  double s = 0.0;
  for (const auto& r : runs) s += r.cost;
  return s / std::max<size_t>(runs.size(), 1);
}

struct CompareRow {
  std::string controller;
  std::string set;
  double v_bar = 0.0;
  int failed = 0;
};

/// Table-shaped controller comparison on identical seed sets.
inline std::vector<CompareRow> compareControllers(
    const Scenario& sc, int n_sim, std::uint64_t base_seed, int threads,
    const EvolvingConfig& rgpThresholds = {0.0, 0.0, 1 << 30}) {
  std::vector<CompareRow> rows;
  auto addRow = [&](const std::string& name, Controller c, InitialSet set) {
    auto runs = replicate(
        [&](std::uint64_t seed) {
          return makeRunConfig(sc, c, set, rgpThresholds, seed);
        },
        n_sim, base_seed, threads);
    CompareRow row;
    row.controller = name;
    row.set = c == Controller::ompc ? "-" : setName(set);
    std::vector<double> costs;
    for (const auto& r : runs)
      if (r.infeasible)
        ++row.failed;
      else
        costs.push_back(r.cost);
    row.v_bar = costs.empty()
                    ? 0.0
                    : std::accumulate(costs.begin(), costs.end(), 0.0) /
                          costs.size();
    rows.push_back(row);
  };
  addRow("oMPC", Controller::ompc, InitialSet::d0);
  for (InitialSet set :
       {InitialSet::d0, InitialSet::dref, InitialSet::dcomb}) {
    addRow("bGP", Controller::bgp, set);
    addRow("rGP", Controller::rgp, set);
  }
  return rows;
}

struct SweepRow {
  double threshold = 0.0;
  double v_bar = 0.0;
  double mean_added = 0.0;
};

/// Performance and added-point counts over a grid of one Rule-1 threshold.
inline std::vector<SweepRow> sweepThresholds(
    const Scenario& sc, InitialSet set, bool sweep_e_bar,
    const std::vector<double>& grid, int n_sim, std::uint64_t base_seed,
    int threads) {
  std::vector<SweepRow> rows;
  for (double g : grid) {
    EvolvingConfig th;
    th.e_bar = sweep_e_bar ? g : 0.0;
    th.sigma2_bar = sweep_e_bar ? 0.0 : g;
    th.capacity_m = 1 << 30;
    auto runs = replicate(
        [&](std::uint64_t seed) {
          return makeRunConfig(sc, Controller::rgp, set, th, seed);
        },
        n_sim, base_seed, threads);
    SweepRow row;
    row.threshold = g;
    row.v_bar = meanCost(runs);
    for (const auto& r : runs) row.mean_added += r.accepted;
    row.mean_added /= std::max<size_t>(runs.size(), 1);
    rows.push_back(row);
  }
  return rows;
}

struct RoaCell {
  double y0 = 0.0;
  double sigma_n = 0.0;
  bool feasible = true;  // no violation in any replicate
  double mu = 0.0;       // realized max |e^p| across replicates
};

inline std::vector<RoaCell> roaSweep(const Scenario& sc, InitialSet set,
                                     const std::vector<double>& y0_grid,
                                     const std::vector<double>& noise_grid,
                                     int replicates, std::uint64_t base_seed,
                                     int threads) {
  std::vector<RoaCell> cells;
  for (double sn : noise_grid)
    for (double y0 : y0_grid) cells.push_back({y0, sn, true, 0.0});
  parallelFor(static_cast<int>(cells.size()), threads, [&](int ci) {
    auto& cell = cells[ci];
    for (int r = 0; r < replicates; ++r) {
      auto cfg = makeRunConfig(sc, Controller::rgp, set,
                               {0.0, 0.0, 1 << 30},
                               base_seed + 1000 * ci + r);
      cfg.y_start = cell.y0;
      cfg.schedule = {cell.y0, sc.y_ref, 5.0};
      cfg.noise.sigma_n2 = cell.sigma_n * cell.sigma_n;
      auto s = summarize(runClosedLoop(cfg));
      cell.mu = std::max(cell.mu, s.max_abs_ep);
      if (s.violated || s.infeasible) cell.feasible = false;
    }
  });
  return cells;
}

struct CholBenchRow {
  int n = 0;
  double t_insert = 0.0;   // median seconds, recursive append
  double t_full = 0.0;     // median seconds, full refactorization
  double agreement = 0.0;  // max abs factor difference
};

inline std::vector<CholBenchRow> benchChol(const std::vector<int>& grid,
                                           int trials = 21,
                                           std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<CholBenchRow> rows;
  for (int n : grid) {
    Eigen::MatrixXd m(n + 1, n + 1);
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) m(i, j) = nd(rng);
    Eigen::MatrixXd a =
        m.transpose() * m +
        static_cast<double>(n) * Eigen::MatrixXd::Identity(n + 1, n + 1);
    auto base = CholFactor::factorize(a.topLeftCorner(n, n));
    const Eigen::VectorXd col = a.block(0, n, n, 1);
    const double diag = a(n, n);

    std::vector<double> ti, tf;
    CholBenchRow row;
    row.n = n;
    base.reserve(n + 1);
    // Repeat the cheap path inside each trial so both timings stay well
    // above clock resolution.
    const int reps = std::max(1, 2000000 / (n * n));
    for (int t = 0; t < trials; ++t) {
      auto t0 = std::chrono::steady_clock::now();
      for (int r = 0; r + 1 < reps; ++r) {
        base.insertBack(col, diag);
        base.removeBack();
      }
      base.insertBack(col, diag);
      CholFactor fi = base;
      base.removeBack();
      auto t1 = std::chrono::steady_clock::now();
      auto ff = CholFactor::factorize(a);
      auto t2 = std::chrono::steady_clock::now();
      ti.push_back(std::chrono::duration<double>(t1 - t0).count() / reps);
      tf.push_back(std::chrono::duration<double>(t2 - t1).count());
      row.agreement = std::max(
          row.agreement,
          (fi.upper() - ff.upper()).cwiseAbs().maxCoeff());
    }
    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return v[v.size() / 2];
    };
    row.t_insert = median(ti);
    row.t_full = median(tf);
    rows.push_back(row);
  }
  return rows;
}

struct OutlierReport {
  std::vector<RunSummary> gated, ungated;
  double gated_dispersion = 0.0;    // cross-run std of y at the probe time
  double ungated_dispersion = 0.0;
  int gated_converged = 0;   // runs ending within 0.01 of the reference
  int ungated_converged = 0;
};

inline OutlierReport outlierStudy(const Scenario& sc, InitialSet set,
                                  const std::vector<double>& times,
                                  int n_sim, std::uint64_t base_seed,
                                  int threads, double probe_t = 15.0,
                                  int n_steps = 60) {
  OutlierReport rep;
  auto runSide = [&](Controller c) {
    return replicate(
        [&](std::uint64_t seed) {
          auto cfg = makeRunConfig(sc, c, set, {0.0, 0.0, 1 << 30}, seed,
                                   n_steps);
          cfg.outlier_times = times;
          return cfg;
        },
        n_sim, base_seed, threads);
  };
  rep.gated = runSide(Controller::rgp);
  rep.ungated = runSide(Controller::rgp_ungated);

  const int probeIdx = static_cast<int>(std::round(probe_t / 0.5)) - 1;
  auto dispersion = [&](const std::vector<RunSummary>& runs) {
    std::vector<double> ys;
    for (const auto& r : runs)
      if (probeIdx >= 0 && probeIdx < static_cast<int>(r.y.size()))
        ys.push_back(r.y[probeIdx]);
    if (ys.size() < 2) return 0.0;
    double mean = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double ss = 0.0;
    for (double y : ys) ss += (y - mean) * (y - mean);
    return std::sqrt(ss / (ys.size() - 1));
  };
  rep.gated_dispersion = dispersion(rep.gated);
  rep.ungated_dispersion = dispersion(rep.ungated);
  for (const auto& r : rep.gated)
    if (std::abs(r.y_final - sc.y_ref) < 0.01) ++rep.gated_converged;
  for (const auto& r : rep.ungated)
    if (std::abs(r.y_final - sc.y_ref) < 0.01) ++rep.ungated_converged;
  return rep;
}

/// Spearman rank correlation between two equal-length samples.
inline double spearman(const std::vector<double>& a,
                       const std::vector<double>& b) {
  const int n = static_cast<int>(a.size());
  auto ranks = [&](const std::vector<double>& v) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int i, int j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    for (int i = 0; i < n;) {
      int j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (i + j) / 2.0;  // average rank across ties
      for (int k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  auto ra = ranks(a), rb = ranks(b);
  const double mean = (n - 1) / 2.0;
  double num = 0.0, da = 0.0, db = 0.0;
  for (int i = 0; i < n; ++i) {
    num += (ra[i] - mean) * (rb[i] - mean);
    da += (ra[i] - mean) * (ra[i] - mean);
    db += (rb[i] - mean) * (rb[i] - mean);
  }
  if (da == 0.0 || db == 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

}  // namespace rgp
