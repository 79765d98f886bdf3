// Command-line front end: data generation, model fitting, terminal design,
// closed-loop simulation, and the Monte Carlo studies. Each subcommand writes
// CSV files plus a .meta sidecar (config echo, seeds, content hash) into the
// output directory.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "rgp/experiments.hpp"
#include "rgp/io.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out = "out";
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  rgp::Config config;

  std::map<std::string, std::string> echo() const {
    auto m = config.all();
    m["seed"] = std::to_string(seed);
    m["threads"] = std::to_string(threads);
    return m;
  }
};

std::string outPath(const GlobalOpts& g, const std::string& name) {
  fs::create_directories(g.out);
  return (fs::path(g.out) / name).string();
}

rgp::EvolvingConfig thresholdsFrom(const rgp::Config& c) {
  rgp::EvolvingConfig th;
  th.e_bar = c.num("rule.e_bar", 0.0);
  th.sigma2_bar = c.num("rule.sigma2_bar", 0.0);
  th.capacity_m = static_cast<int>(c.integer("rule.capacity_m", 1 << 30));
  return th;
}

rgp::InitialSet setFrom(const std::string& s) {
  if (s == "D0" || s == "d0") return rgp::InitialSet::d0;
  if (s == "Dref" || s == "dref") return rgp::InitialSet::dref;
  if (s == "Dcomb" || s == "dcomb") return rgp::InitialSet::dcomb;
  throw std::runtime_error("unknown initial set: " + s);
}

rgp::Controller controllerFrom(const std::string& s) {
  if (s == "ompc") return rgp::Controller::ompc;
  if (s == "bgp") return rgp::Controller::bgp;
  if (s == "rgp") return rgp::Controller::rgp;
  if (s == "rgp-ungated") return rgp::Controller::rgp_ungated;
  throw std::runtime_error("unknown controller: " + s);
}

/// Load the scenario artifacts if gen-data/fit-hp/design-terminal already ran
/// into this output directory; otherwise build everything from the seed.
rgp::Scenario loadOrBuildScenario(const GlobalOpts& g) {
  const int budget =
      static_cast<int>(g.config.integer("fit.budget", 4000));
  const auto have = [&](const std::string& n) {
    return fs::exists(fs::path(g.out) / n);
  };
  if (!(have("d0.txt") && have("dref.txt") && have("dcomb.txt") &&
        have("d0.hp") && have("dref.hp") && have("dcomb.hp") &&
        have("terminal.txt")))
    return rgp::buildScenario(g.seed, budget);

  rgp::Scenario sc;
  sc.u0 = rgp::inputForOutput(sc.y0, sc.plant);
  sc.u_ref = rgp::inputForOutput(sc.y_ref, sc.plant);
  sc.d0 = rgp::loadTrainingSet(outPath(g, "d0.txt"));
  sc.dref = rgp::loadTrainingSet(outPath(g, "dref.txt"));
  sc.dcomb = rgp::loadTrainingSet(outPath(g, "dcomb.txt"));
  sc.th_d0 = rgp::loadHyperparameters(outPath(g, "d0.hp"));
  sc.th_dref = rgp::loadHyperparameters(outPath(g, "dref.hp"));
  sc.th_dcomb = rgp::loadHyperparameters(outPath(g, "dcomb.hp"));
  sc.terminal = rgp::loadTerminalPair(outPath(g, "terminal.txt"));
  return sc;
}

void sidecar(const GlobalOpts& g, const std::string& csv,
             std::vector<std::uint64_t> seeds = {}) {
  if (seeds.empty()) seeds.push_back(g.seed);
  rgp::writeSidecar(csv, g.echo(), seeds);
}

int cmdGenData(const GlobalOpts& g) {
  rgp::Scenario sc = rgp::buildScenario(g.seed, 1);  // fits redone by fit-hp
  rgp::saveTrainingSet(sc.raw, outPath(g, "raw.txt"));
  rgp::saveTrainingSet(sc.d0, outPath(g, "d0.txt"));
  rgp::saveTrainingSet(sc.dref, outPath(g, "dref.txt"));
  rgp::saveTrainingSet(sc.dcomb, outPath(g, "dcomb.txt"));
  std::printf("raw=%d D0=%d Dref=%d Dcomb=%d\n", sc.raw.size(), sc.d0.size(),
              sc.dref.size(), sc.dcomb.size());
  return 0;
}

int cmdFitHp(const GlobalOpts& g) {
  const int budget =
      static_cast<int>(g.config.integer("fit.budget", 4000));
  for (const char* name : {"d0", "dref", "dcomb"}) {
    auto d = rgp::loadTrainingSet(outPath(g, std::string(name) + ".txt"));
    auto fit = rgp::optimizeHyperparameters(
        d, rgp::defaultThetaStart(d), budget, 8, g.seed);
    rgp::saveHyperparameters(fit.theta,
                             outPath(g, std::string(name) + ".hp"));
    std::printf("%s: loglik=%.4f evals=%d converged=%d\n", name, fit.loglik,
                fit.evaluations, fit.converged ? 1 : 0);
  }
  return 0;
}

int cmdValidate(const GlobalOpts& g) {
  auto sc = loadOrBuildScenario(g);
  rgp::CsvWriter csv(outPath(g, "validate.csv"),
                     {"set", "n_test", "frac_err_ok", "frac_sigma_ok"});
  // Held-out test points: a fresh raw pass under a shifted seed, restricted
  // to each set's neighborhood.
  rgp::ChirpSpec chirp;
  rgp::NoiseSpec noise;
  auto test_raw = rgp::generateRaw({sc.u0, sc.u_ref}, chirp, sc.plant, noise,
                                   sc.nm, 0.5, g.seed + 77);
  const double radius = g.config.num("validate.radius", 0.03);
  bool all_ok = true;
  for (auto set : {rgp::InitialSet::d0, rgp::InitialSet::dref,
                   rgp::InitialSet::dcomb}) {
    const double center =
        set == rgp::InitialSet::d0 ? sc.y0 : sc.y_ref;
    auto test = set == rgp::InitialSet::dcomb
                    ? rgp::unionOf(rgp::extractLocal(test_raw, sc.y0, radius,
                                                     0.0, sc.nm),
                                   rgp::extractLocal(test_raw, sc.y_ref,
                                                     radius, 0.0, sc.nm))
                    : rgp::extractLocal(test_raw, center, radius, 0.0, sc.nm);
    auto m = rgp::GpModel::fit(rgp::setOf(sc, set), rgp::thetaOf(sc, set));
    int err_ok = 0, sig_ok = 0;
    for (int i = 0; i < test.size(); ++i) {
      auto [mean, var] = m.posterior(test.regressors[i]);
      const double ep =
          std::abs(test.outputs[i] - mean) * sc.nm.yRange();
      const double sig = std::sqrt(std::max(var, 0.0)) * sc.nm.yRange();
      if (ep < 0.02) ++err_ok;
      if (sig < 5e-3) ++sig_ok;
    }
    const double fe = test.size() ? double(err_ok) / test.size() : 0.0;
    const double fsg = test.size() ? double(sig_ok) / test.size() : 0.0;
    csv.rowMixed({rgp::setName(set), std::to_string(test.size()),
                  std::to_string(fe), std::to_string(fsg)});
    std::printf("%s: n=%d err_ok=%.3f sigma_ok=%.3f\n", rgp::setName(set),
                test.size(), fe, fsg);
    if (fe < 0.95 || fsg < 0.95) all_ok = false;
  }
  sidecar(g, outPath(g, "validate.csv"));
  return all_ok ? 0 : 1;
}

int cmdDesignTerminal(const GlobalOpts& g) {
  auto sc = loadOrBuildScenario(g);
  auto m = rgp::GpModel::fit(sc.dref, sc.th_dref);
  auto w = rgp::regressorOf(rgp::NarxState::constant(sc.y_ref), sc.u_ref,
                            sc.nm);
  auto lin = rgp::linearize(m, w);
  auto tp = rgp::designTerminalForBoxes(lin, sc.nm, sc.y_ref, sc.u_ref);
  rgp::saveTerminalPair(tp, outPath(g, "terminal.txt"));
  std::printf("k = [%.6f %.6f %.6f]\n", tp.k(0), tp.k(1), tp.k(2));
  for (int i = 0; i < 3; ++i)
    std::printf("P%d = [%.6f %.6f %.6f]\n", i, tp.P(i, 0), tp.P(i, 1),
                tp.P(i, 2));
  return 0;
}

int cmdSimulate(const GlobalOpts& g) {
  auto sc = loadOrBuildScenario(g);
  auto cfg = rgp::makeRunConfig(
      sc, controllerFrom(g.config.str("run.controller", "rgp")),
      setFrom(g.config.str("run.set", "Dref")), thresholdsFrom(g.config),
      g.seed, static_cast<int>(g.config.integer("run.n_steps", 60)));
  cfg.noise.sigma_n2 = g.config.num("run.sigma_n", 0.003) *
                       g.config.num("run.sigma_n", 0.003);
  cfg.y_start = g.config.num("run.y_start", sc.y0);
  cfg.schedule.y0 = cfg.y_start;
  auto res = rgp::runClosedLoop(cfg);

  rgp::CsvWriter csv(outPath(g, "simulate.csv"),
                     {"k", "t", "u", "y", "v_star", "e_p", "sigma2",
                      "n_points", "candidate", "gate"});
  for (const auto& r : res.records)
    csv.row({double(r.k), r.t, r.u, r.y, r.v_star, r.e_p, r.sigma2,
             double(r.n_points), double(r.candidate), double(r.gate)});
  sidecar(g, outPath(g, "simulate.csv"));
  std::printf("cost=%.4f violated=%d infeasible=%d final_points=%d\n",
              res.cost_sum, res.violated ? 1 : 0, res.infeasible ? 1 : 0,
              res.final_model.size());
  return res.infeasible ? 2 : 0;
}

int cmdCompare(const GlobalOpts& g) {
  auto sc = loadOrBuildScenario(g);
  const int n_sim = static_cast<int>(g.config.integer("run.n_sim", 50));
  auto rows = rgp::compareControllers(sc, n_sim, g.seed, g.threads,
                                      thresholdsFrom(g.config));
  rgp::CsvWriter csv(outPath(g, "compare.csv"),
                     {"controller", "set", "v_bar", "failed"});
  for (const auto& r : rows) {
    csv.rowMixed({r.controller, r.set, std::to_string(r.v_bar),
                  std::to_string(r.failed)});
    std::printf("%-5s %-5s V=%.2f failed=%d\n", r.controller.c_str(),
                r.set.c_str(), r.v_bar, r.failed);
  }
  std::vector<std::uint64_t> seeds(n_sim);
  std::iota(seeds.begin(), seeds.end(), g.seed);
  sidecar(g, outPath(g, "compare.csv"), seeds);
  return 0;
}

int cmdSweep(const GlobalOpts& g) {
  auto sc = loadOrBuildScenario(g);
  const bool sweep_e = g.config.str("sweep.variable", "e_bar") == "e_bar";
  std::vector<double> grid;
  {
    std::istringstream ss(
        g.config.str("sweep.grid", "0 0.005 0.01 0.02 0.04"));
    double x;
    while (ss >> x) grid.push_back(x);
  }
  auto rows = rgp::sweepThresholds(
      sc, setFrom(g.config.str("run.set", "Dref")), sweep_e, grid,
      static_cast<int>(g.config.integer("run.n_sim", 20)), g.seed,
      g.threads);
  rgp::CsvWriter csv(outPath(g, "sweep.csv"),
                     {"threshold", "v_bar", "mean_added"});
  for (const auto& r : rows) {
    csv.row({r.threshold, r.v_bar, r.mean_added});
    std::printf("thr=%.4g V=%.2f added=%.1f\n", r.threshold, r.v_bar,
                r.mean_added);
  }
  sidecar(g, outPath(g, "sweep.csv"));
  return 0;
}

int cmdRoa(const GlobalOpts& g) {
  auto sc = loadOrBuildScenario(g);
  std::vector<double> y0_grid, noise_grid;
  for (double y = 0.45; y <= 0.641; y += 0.02) y0_grid.push_back(y);
  for (double s = 0.003; s <= 0.0121; s += 0.003) noise_grid.push_back(s);
  auto cells = rgp::roaSweep(
      sc, setFrom(g.config.str("run.set", "Dref")), y0_grid, noise_grid,
      static_cast<int>(g.config.integer("run.replicates", 30)), g.seed,
      g.threads);
  rgp::CsvWriter csv(outPath(g, "roa.csv"),
                     {"y0", "sigma_n", "feasible", "mu"});
  for (const auto& c : cells)
    csv.row({c.y0, c.sigma_n, double(c.feasible), c.mu});
  sidecar(g, outPath(g, "roa.csv"));

  // Per-noise-level summary: feasible-cell count vs realized error level.
  for (double sn : noise_grid) {
    int feas = 0;
    double mu = 0.0;
    for (const auto& c : cells)
      if (c.sigma_n == sn) {
        feas += c.feasible ? 1 : 0;
        mu = std::max(mu, c.mu);
      }
    std::printf("sigma_n=%.4f feasible=%d mu=%.4f\n", sn, feas, mu);
  }
  return 0;
}

int cmdOutliers(const GlobalOpts& g) {
  auto sc = loadOrBuildScenario(g);
  auto rep = rgp::outlierStudy(
      sc, setFrom(g.config.str("run.set", "Dref")),
      {7.0, 10.0, 12.5, 20.0},
      static_cast<int>(g.config.integer("run.n_sim", 50)), g.seed,
      g.threads);
  rgp::CsvWriter csv(outPath(g, "outliers.csv"),
                     {"variant", "run", "cost", "y_final", "accepted",
                      "candidates"});
  auto dump = [&](const char* name, const std::vector<rgp::RunSummary>& rs) {
    for (size_t i = 0; i < rs.size(); ++i)
      csv.rowMixed({name, std::to_string(i), std::to_string(rs[i].cost),
                    std::to_string(rs[i].y_final),
                    std::to_string(rs[i].accepted),
                    std::to_string(rs[i].candidates)});
  };
  dump("gated", rep.gated);
  dump("ungated", rep.ungated);
  sidecar(g, outPath(g, "outliers.csv"));
  std::printf(
      "gated: conv=%d/%zu disp=%.5f | ungated: conv=%d/%zu disp=%.5f\n",
      rep.gated_converged, rep.gated.size(), rep.gated_dispersion,
      rep.ungated_converged, rep.ungated.size(), rep.ungated_dispersion);
  return 0;
}

int cmdBenchChol(const GlobalOpts& g) {
  auto rows = rgp::benchChol({50, 100, 200, 400}, 21, g.seed);
  rgp::CsvWriter csv(outPath(g, "bench_chol.csv"),
                     {"n", "t_insert_s", "t_full_s", "speedup",
                      "max_factor_diff"});
  for (const auto& r : rows) {
    const double sp = r.t_full / r.t_insert;
    csv.row({double(r.n), r.t_insert, r.t_full, sp, r.agreement});
    std::printf("n=%d insert=%.3gs full=%.3gs speedup=%.1fx\n", r.n,
                r.t_insert, r.t_full, sp);
  }
  sidecar(g, outPath(g, "bench_chol.csv"));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recursive GP NARX model predictive control toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts g;
  app.add_option("--config", g.config_path, "key=value config file");
  app.add_option("--seed", g.seed, "base RNG seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker pool size");

  std::map<std::string, std::function<int(const GlobalOpts&)>> cmds = {
      {"gen-data", cmdGenData},        {"fit-hp", cmdFitHp},
      {"validate", cmdValidate},       {"design-terminal", cmdDesignTerminal},
      {"simulate", cmdSimulate},       {"compare", cmdCompare},
      {"sweep", cmdSweep},             {"roa", cmdRoa},
      {"outliers", cmdOutliers},       {"bench-chol", cmdBenchChol}};
  for (auto& [name, fn] : cmds) app.add_subcommand(name);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!g.config_path.empty())
      g.config = rgp::Config::fromFile(g.config_path);
    if (g.threads < 1) g.threads = 1;
    for (auto& [name, fn] : cmds)
      if (app.get_subcommand(name)->parsed()) return fn(g);
    return 1;
  } catch (const rgp::Infeasible& e) {
    std::fprintf(stderr, "infeasible: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
