#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rgp/cstr.hpp"
#include "rgp/errors.hpp"
#include "rgp/evolving.hpp"
#include "rgp/gp.hpp"
#include "rgp/narx.hpp"

namespace rgp {

/// Finite-horizon optimal control problem data, all in original units.
struct OcpSpec {
  int horizon = 5;
  Eigen::MatrixXd Q;          // state weight (diag(100, 0, 0) default)
  double R = 5.0;             // input weight
  double lambda = 1.0;        // terminal weight, >= 1
  Eigen::MatrixXd P;          // terminal cost matrix
  Eigen::VectorXd k_gain;     // terminal feedback gain
  NarxState x_ref;            // reference state (constant output window)
  double u_ref = 356.0;
  double u_lo = 335.0, u_hi = 372.0;
  double y_lo = 0.35, y_hi = 0.65;
  double barrier_gain = 1e3;   // soft-set hinge weight
  double hard_penalty = 1e6;   // exact-penalty weight in hard mode
  bool hard = false;
  double y_scale = 1.0;  // output deviations divided by this in the cost
  double u_scale = 1.0;  // input deviations divided by this in the cost
  Normalizer nm;

  static OcpSpec defaults() {
    OcpSpec s;
    s.Q = Eigen::Vector3d(100.0, 0.0, 0.0).asDiagonal();
    s.P = Eigen::Matrix3d::Identity();
    s.k_gain = Eigen::Vector3d::Zero();
    s.x_ref = NarxState::constant(0.439);
    return s;
  }

  void validate() const {
    if (lambda < 1.0) throw DimensionMismatch("ocp: lambda must be >= 1");
    if (horizon < 1) throw DimensionMismatch("ocp: horizon must be >= 1");
  }

  double clampU(double u) const { return std::clamp(u, u_lo, u_hi); }

  double barrier(double y) const {
    const double below = y_lo - y, above = y - y_hi;
    const double d = std::max({below, above, 0.0});
    return barrier_gain * d * d;
  }

  double hardViolation(double y) const {
    const double d = std::max({y_lo - y, y - y_hi, 0.0});
    return d;
  }

  double terminalLaw(const NarxState& xN) const {
    return clampU(u_ref + k_gain.dot(xN.vec() - x_ref.vec()));
  }
};

inline double stageCost(const NarxState& x, double u, const OcpSpec& spec) {
  const Eigen::VectorXd dx = (x.vec() - spec.x_ref.vec()) / spec.y_scale;
  const double du = (u - spec.u_ref) / spec.u_scale;
  return dx.dot(spec.Q * dx) + spec.R * du * du + spec.barrier(x.y());
}

/// GP-predicted trajectory cost: sum of stage costs plus the weighted
/// terminal quadratic; in hard mode predicted-state box violations incur
/// the exact penalty.
inline double totalCost(const GpModel& model, const NarxState& x0,
                        const Eigen::VectorXd& u_seq, const OcpSpec& spec) {
  if (u_seq.size() != spec.horizon)
    throw DimensionMismatch("totalCost: input sequence length");
  auto seq = rollout(model, x0, u_seq, spec.nm);
  double v = 0.0;
  for (int i = 0; i < spec.horizon; ++i) v += stageCost(seq[i], u_seq(i), spec);
  const Eigen::VectorXd dxN =
      (seq.back().vec() - spec.x_ref.vec()) / spec.y_scale;
  v += spec.lambda * dxN.dot(spec.P * dxN);
  if (spec.hard)
    for (int i = 1; i <= spec.horizon; ++i) {
      const double d = spec.hardViolation(seq[i].y());
      v += spec.hard_penalty * d * d;
    }
  return v;
}

enum class SolveStatus { converged, max_iter, infeasible };

struct OcpSolution {
  Eigen::VectorXd u_seq;
  std::vector<NarxState> x_seq;
  double value = 0.0;
  SolveStatus status = SolveStatus::converged;
};

/// Projected-gradient minimization of an arbitrary cost over a boxed input
/// sequence. Finite-difference gradients, Barzilai-Borwein step with Armijo
/// backtracking; the returned value never exceeds any supplied start.
inline std::pair<Eigen::VectorXd, std::pair<double, SolveStatus>>
minimizeBoxed(const std::function<double(const Eigen::VectorXd&)>& cost,
              const std::vector<Eigen::VectorXd>& starts, double lo,
              double hi, int max_iter = 200, double tol = 1e-8) {
  if (starts.empty()) throw EmptySet("minimizeBoxed: no starts");
  auto project = [&](Eigen::VectorXd u) {
    for (int i = 0; i < u.size(); ++i) u(i) = std::clamp(u(i), lo, hi);
    return u;
  };
  const double h = 1e-6 * (hi - lo);

  Eigen::VectorXd bestU;
  double bestV = std::numeric_limits<double>::infinity();
  SolveStatus status = SolveStatus::max_iter;

  for (const auto& start : starts) {
    Eigen::VectorXd u = project(start);
    double v = cost(u);
    if (v < bestV) {
      bestV = v;
      bestU = u;
    }
    Eigen::VectorXd gPrev, uPrev;
    double stepLen = 0.1 * (hi - lo);
    bool localConverged = false;
    for (int it = 0; it < max_iter; ++it) {
      Eigen::VectorXd g(u.size());
      for (int i = 0; i < u.size(); ++i) {
        Eigen::VectorXd up = u, um = u;
        up(i) = std::min(up(i) + h, hi);
        um(i) = std::max(um(i) - h, lo);
        g(i) = (cost(up) - cost(um)) / (up(i) - um(i));
      }
      if (it > 0) {
        const Eigen::VectorXd s = u - uPrev, yv = g - gPrev;
        const double sy = s.dot(yv);
        if (sy > 1e-16) stepLen = s.squaredNorm() / sy;
        stepLen = std::clamp(stepLen, 1e-8, 10.0 * (hi - lo));
      }
      uPrev = u;
      gPrev = g;

      double t = stepLen;
      double vNew = v;
      Eigen::VectorXd uNew = u;
      bool improved = false;
      for (int bt = 0; bt < 30; ++bt) {
        Eigen::VectorXd uc = project(u - t * g);
        const double vc = cost(uc);
        if (vc < v - 1e-12) {
          uNew = uc;
          vNew = vc;
          improved = true;
          break;
        }
        t *= 0.5;
      }
      if (!improved) {
        localConverged = true;
        break;
      }
      const double drop = v - vNew;
      u = uNew;
      v = vNew;
      if (drop < tol) {
        localConverged = true;
        break;
      }
    }
    if (v < bestV) {
      bestV = v;
      bestU = u;
    }
    if (localConverged && bestV == v) status = SolveStatus::converged;
  }
  if (status != SolveStatus::converged && bestU.size() > 0)
    status = SolveStatus::max_iter;
  return {bestU, {bestV, status}};
}

inline OcpSolution solveOcp(const GpModel& model, const NarxState& x0,
                            const OcpSpec& spec,
                            std::optional<Eigen::VectorXd> warm = {}) {
  spec.validate();
  auto cost = [&](const Eigen::VectorXd& u) {
    return totalCost(model, x0, u, spec);
  };
  std::vector<Eigen::VectorXd> starts;
  if (warm && warm->size() == spec.horizon) starts.push_back(*warm);
  starts.push_back(Eigen::VectorXd::Constant(spec.horizon, spec.u_ref));
  auto [u, vs] = minimizeBoxed(cost, starts, spec.u_lo, spec.u_hi);

  OcpSolution sol;
  sol.u_seq = u;
  sol.x_seq = rollout(model, x0, u, spec.nm);
  sol.value = vs.first;
  sol.status = vs.second;
  if (spec.hard) {
    for (int i = 1; i <= spec.horizon; ++i)
      if (spec.hardViolation(sol.x_seq[i].y()) > 1e-6) {
        sol.status = SolveStatus::infeasible;
        break;
      }
  }
  return sol;
}

/// Shifted warm start: drop the applied input, append the terminal law at
/// the predicted end state.
inline Eigen::VectorXd shiftedWarmStart(const GpModel& model,
                                        const NarxState& x0,
                                        const OcpSolution& prev,
                                        const OcpSpec& spec) {
  Eigen::VectorXd w(spec.horizon);
  if (prev.u_seq.size() != spec.horizon)
    return Eigen::VectorXd::Constant(spec.horizon, spec.u_ref);
  w.head(spec.horizon - 1) = prev.u_seq.tail(spec.horizon - 1);
  auto seq = rollout(model, x0, w.head(spec.horizon - 1), spec.nm);
  w(spec.horizon - 1) = spec.terminalLaw(seq.back());
  return w;
}

/// One receding-horizon step: solve from the shifted warm start, apply the
/// first input.
inline std::pair<double, OcpSolution> controlStep(
    const GpModel& model, const NarxState& x0, const OcpSpec& spec,
    const std::optional<OcpSolution>& prev = {}) {
  std::optional<Eigen::VectorXd> warm;
  if (prev) warm = shiftedWarmStart(model, x0, *prev, spec);
  OcpSolution sol = solveOcp(model, x0, spec, warm);
  return {sol.u_seq(0), sol};
}

/// Accepts the candidate training set only when it does not increase the
/// optimal cost at the gate state.
inline bool valueGate(const GpModel& model, const GpModel& candidate,
                      const NarxState& x0, const OcpSpec& spec,
                      std::optional<Eigen::VectorXd> warm = {}) {
  const double vCur = solveOcp(model, x0, spec, warm).value;
  const double vCand = solveOcp(candidate, x0, spec, warm).value;
  return vCand <= vCur;
}

}  // namespace rgp
