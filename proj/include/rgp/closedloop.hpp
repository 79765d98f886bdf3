#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "rgp/cstr.hpp"
#include "rgp/evolving.hpp"
#include "rgp/mpc.hpp"
#include "rgp/narx.hpp"

namespace rgp {

enum class Controller { ompc, bgp, rgp, rgp_ungated };

/// Piecewise-constant output reference: y0 until t_switch minutes, y1 after.
struct ReferenceSchedule {
  double y0 = 0.6;
  double y1 = 0.439;
  double t_switch = 5.0;
};

struct ClosedLoopConfig {
  Controller controller = Controller::rgp;
  GpModel model;  // initial prediction model (ignored for ompc)
  OcpSpec spec;   // weights, boxes, terminal pair; references set per step
  EvolvingConfig thresholds;  // e_bar in mol/l, sigma2_bar in (mol/l)^2
  NoiseSpec noise;
  CstrParams plant;
  double Ts = 0.5;
  int n_steps = 60;
  double y_start = 0.6;
  ReferenceSchedule schedule;
  std::vector<double> outlier_times;  // minutes; additive measurement spikes
  double outlier_magnitude = 5.0 * 4.0 * 0.003;
  std::uint64_t seed = 0;
};

struct StepRecord {
  int k = 0;
  double t = 0.0;
  double u = 0.0;
  double y = 0.0;        // measured output after applying u
  double v_star = 0.0;   // optimal cost at the pre-step state
  double e_p = 0.0;      // one-step prediction error (mol/l)
  double sigma2 = 0.0;   // posterior variance at the step regressor
  int n_points = 0;
  bool candidate = false;
  int gate = -1;  // -1 no candidate, 0 rejected, 1 accepted
  SolveStatus status = SolveStatus::converged;
};

struct ClosedLoopResult {
  std::vector<StepRecord> records;
  double cost_sum = 0.0;  // accumulated closed-loop stage cost
  bool violated = false;  // measured output left the hard box
  bool infeasible = false;
  GpModel final_model;
};

/// Cost of an input sequence under the exact plant propagated by Euler;
/// stage costs read predicted outputs through the same state window as the
/// learned predictor.
inline double plantTotalCost(const CstrState& s0, const NarxState& x0,
                             const Eigen::VectorXd& u_seq,
                             const OcpSpec& spec, const CstrParams& plant,
                             double Ts) {
  CstrState s = s0;
  NarxState x = x0;
  double v = 0.0;
  const int N = static_cast<int>(u_seq.size());
  for (int i = 0; i < N; ++i) {
    v += stageCost(x, u_seq(i), spec);
    s = step(s, u_seq(i), Ts, plant);
    for (int j = static_cast<int>(x.outputs.size()) - 1; j > 0; --j)
      x.outputs(j) = x.outputs(j - 1);
    x.outputs(0) = s.CA;
    if (spec.hard) {
      const double d = spec.hardViolation(x.y());
      v += spec.hard_penalty * d * d;
    }
  }
  const Eigen::VectorXd dxN = (x.vec() - spec.x_ref.vec()) / spec.y_scale;
  return v + spec.lambda * dxN.dot(spec.P * dxN);
}

inline ClosedLoopResult runClosedLoop(const ClosedLoopConfig& cfg) {
  ClosedLoopResult out;
  std::mt19937_64 rng(cfg.seed);
  const Normalizer& nm = cfg.spec.nm;

  // Start at the steady state sustaining y_start; pre-roll to fill the
  // measurement history.
  CstrState s = equilibriumForOutput(cfg.y_start, cfg.plant);
  const double u_hold = s.Tc;
  NarxState x = NarxState::constant(cfg.y_start);
  for (int i = static_cast<int>(x.outputs.size()) - 1; i >= 0; --i) {
    x.outputs(i) = measure(s, cfg.noise, rng);
    if (i > 0) s = step(s, u_hold, cfg.Ts, cfg.plant);
  }

  GpModel model = cfg.model;
  std::optional<OcpSolution> prev;
  Eigen::VectorXd warm;

  // Normalized-unit thresholds for the candidate rule.
  EvolvingConfig thNorm = cfg.thresholds;
  thNorm.e_bar = cfg.thresholds.e_bar / nm.yRange();
  thNorm.sigma2_bar = cfg.thresholds.sigma2_bar / (nm.yRange() * nm.yRange());

  for (int k = 0; k < cfg.n_steps; ++k) {
    const double t = k * cfg.Ts;
    const double yRef = t < cfg.schedule.t_switch ? cfg.schedule.y0
                                                  : cfg.schedule.y1;
    OcpSpec spec = cfg.spec;
    spec.x_ref = NarxState::constant(yRef);
    spec.u_ref = inputForOutput(yRef, cfg.plant);

    StepRecord rec;
    rec.k = k;
    rec.t = t;
    rec.n_points = model.size();

    OcpSolution sol;
    if (cfg.controller == Controller::ompc) {
      auto cost = [&](const Eigen::VectorXd& u) {
        return plantTotalCost(s, x, u, spec, cfg.plant, cfg.Ts);
      };
      std::vector<Eigen::VectorXd> starts;
      if (prev) {
        Eigen::VectorXd w(spec.horizon);
        w.head(spec.horizon - 1) = prev->u_seq.tail(spec.horizon - 1);
        w(spec.horizon - 1) = spec.u_ref;
        starts.push_back(w);
      }
      starts.push_back(Eigen::VectorXd::Constant(spec.horizon, spec.u_ref));
      auto [u, vs] = minimizeBoxed(cost, starts, spec.u_lo, spec.u_hi);
      sol.u_seq = u;
      sol.value = vs.first;
      sol.status = vs.second;
    } else {
      auto [u0, solved] = controlStep(model, x, spec, prev);
      sol = std::move(solved);
      (void)u0;
    }
    const double u = sol.u_seq(0);
    rec.u = u;
    rec.v_star = sol.value;
    rec.status = sol.status;
    if (sol.status == SolveStatus::infeasible) {
      out.infeasible = true;
      out.records.push_back(rec);
      break;
    }

    out.cost_sum += stageCost(x, u, spec);

    // Regressor and prediction diagnostics before the state advances.
    const Eigen::VectorXd w = regressorOf(x, u, nm);
    double predMean = 0.0, predVar = 0.0;
    if (cfg.controller != Controller::ompc) {
      auto [m, v] = model.posterior(w);
      predMean = m;
      predVar = v;
    }

    // Plant step and measurement (with scheduled outlier spikes).
    s = step(s, u, cfg.Ts, cfg.plant);
    double yNext = measure(s, cfg.noise, rng);
    for (double to : cfg.outlier_times)
      if (std::abs((t + cfg.Ts) - to) < 0.25 * cfg.Ts)
        yNext += cfg.outlier_magnitude;
    rec.y = yNext;
    if (yNext < cfg.spec.y_lo - 1e-12 || yNext > cfg.spec.y_hi + 1e-12)
      out.violated = true;

    if (cfg.controller != Controller::ompc) {
      rec.e_p = yNext - nm.denormY(predMean);
      rec.sigma2 = predVar * nm.yRange() * nm.yRange();
    }

    // Online model update (Rule 1 + capacity + value gate).
    if (cfg.controller == Controller::rgp ||
        cfg.controller == Controller::rgp_ungated) {
      auto cand = propose(model, w, nm.normY(yNext), thNorm);
      rec.candidate =
          isCandidate(model, w, nm.normY(yNext), thNorm).flag;
      if (cand) {
        bool accept = true;
        if (cfg.controller == Controller::rgp) {
          const double vCand =
              solveOcp(*cand, x, spec, sol.u_seq).value;
          accept = vCand <= sol.value;
        }
        rec.gate = accept ? 1 : 0;
        if (accept) model = std::move(*cand);
      }
    }

    // Advance the measured NARX state.
    for (int j = static_cast<int>(x.outputs.size()) - 1; j > 0; --j)
      x.outputs(j) = x.outputs(j - 1);
    x.outputs(0) = yNext;

    prev = std::move(sol);
    out.records.push_back(rec);
  }
  out.final_model = std::move(model);
  return out;
}

}  // namespace rgp
