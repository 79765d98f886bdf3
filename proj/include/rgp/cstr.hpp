#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "rgp/errors.hpp"
#include "rgp/gp.hpp"
#include "rgp/narx.hpp"

namespace rgp {

/// Stirred-tank reactor constants. Units: l, min, K, J, g, mol.
struct CstrParams {
  double q0 = 10.0;        // feed flow, l/min
  double V = 150.0;        // tank volume, l
  double k0 = 6e10;        // Arrhenius frequency, 1/min
  double E_over_R = 9750;  // activation temperature, K
  double dHr = 10000.0;    // heat released per mole converted, J/mol
  double UA = 70000.0;     // heat-transfer coefficient, J/(min K)
  double rho = 1100.0;     // density, g/l
  double Cp = 0.3;         // specific heat, J/(g K)
  double tau = 1.5;        // coolant lag, min
  double CAf = 1.0;        // feed concentration, mol/l
  double Tf = 370.0;       // feed temperature, K
};

struct CstrState {
  double CA = 0.0;  // mol/l
  double T = 0.0;   // K
  double Tc = 0.0;  // K
};

struct CstrDeriv {
  double dCA = 0.0, dT = 0.0, dTc = 0.0;
};

inline CstrDeriv derivatives(const CstrState& s, double Tr,
                             const CstrParams& p) {
  const double rate = p.k0 * std::exp(-p.E_over_R / s.T) * s.CA;
  CstrDeriv d;
  d.dCA = p.q0 / p.V * (p.CAf - s.CA) - rate;
  d.dT = p.q0 / p.V * (p.Tf - s.T) + p.dHr / (p.rho * p.Cp) * rate +
         p.UA / (p.V * p.rho * p.Cp) * (s.Tc - s.T);
  d.dTc = (Tr - s.Tc) / p.tau;
  return d;
}

/// Forward-Euler step of length Ts minutes.
inline CstrState step(const CstrState& s, double Tr, double Ts,
                      const CstrParams& p) {
  const CstrDeriv d = derivatives(s, Tr, p);
  return {s.CA + Ts * d.dCA, s.T + Ts * d.dT, s.Tc + Ts * d.dTc};
}

/// Steady state for a held input, by damped fixed-point iteration on the
/// right-hand side.
inline CstrState equilibrium(double Tr, const CstrParams& p,
                             double tol = 1e-10) {
  CstrState s{0.5, Tr, Tr};
  const double eta = 0.01;
  for (int it = 0; it < 2000000; ++it) {
    const CstrDeriv d = derivatives(s, Tr, p);
    s.CA += eta * d.dCA;
    s.T += eta * d.dT;
    s.Tc += eta * d.dTc;
    if (std::abs(d.dCA) < tol && std::abs(d.dT) < tol &&
        std::abs(d.dTc) < tol)
      return s;
  }
  throw Infeasible("equilibrium: fixed-point iteration did not converge");
}

/// Steady state achieving a target concentration, from the closed-form mass
/// and heat balances; also returns the required held input via state.Tc.
inline CstrState equilibriumForOutput(double CA, const CstrParams& p) {
  if (CA <= 0.0 || CA >= p.CAf)
    throw Infeasible("equilibriumForOutput: target outside (0, CAf)");
  const double k = p.q0 / p.V * (p.CAf - CA) / CA;
  const double T = -p.E_over_R / std::log(k / p.k0);
  const double Tc =
      T - (p.q0 / p.V * (p.Tf - T) + p.dHr / (p.rho * p.Cp) * k * CA) *
              (p.V * p.rho * p.Cp) / p.UA;
  return {CA, T, Tc};
}

/// Held input that sustains a target output at steady state.
inline double inputForOutput(double CA, const CstrParams& p) {
  return equilibriumForOutput(CA, p).Tc;
}

/// Zero-mean Gaussian measurement noise truncated at +-bound_sigmas sigma.
struct NoiseSpec {
  double sigma_n2 = 0.003 * 0.003;  // (mol/l)^2
  double bound_sigmas = 4.0;

  double draw(std::mt19937_64& rng) const {
    if (sigma_n2 <= 0.0) return 0.0;
    const double sigma = std::sqrt(sigma_n2);
    std::normal_distribution<double> nd(0.0, sigma);
    for (;;) {
      const double e = nd(rng);
      if (std::abs(e) <= bound_sigmas * sigma) return e;
    }
  }
};

inline double measure(const CstrState& s, const NoiseSpec& noise,
                      std::mt19937_64& rng) {
  return s.CA + noise.draw(rng);
}

/// Linear-sweep chirp around a center input:
/// u(t) = center + A sin(2 pi (f0 + (f1-f0) t / (2 T)) t).
struct ChirpSpec {
  double amplitude = 9.0;   // K
  double f0 = 0.01;         // 1/min
  double f1 = 0.2;          // 1/min
  double duration = 400.0;  // min

  double at(double center, double t) const {
    const double f = f0 + (f1 - f0) * t / (2.0 * duration);
    return center + amplitude * std::sin(2.0 * M_PI * f * t);
  }
};

/// Chirp-excited raw data: one pass per center input, each starting at that
/// input's steady state, recording normalized (w, z) pairs.
inline TrainingSet generateRaw(const std::vector<double>& centers,
                               const ChirpSpec& chirp, const CstrParams& p,
                               const NoiseSpec& noise, const Normalizer& nm,
                               double Ts, std::uint64_t seed, int m_y = 2) {
  TrainingSet raw;
  std::mt19937_64 rng(seed);
  const int nsteps = static_cast<int>(std::floor(chirp.duration / Ts));
  for (double center : centers) {
    if (center - chirp.amplitude < nm.u_lo ||
        center + chirp.amplitude > nm.u_hi)
      throw ConstraintViolation("generateRaw: excitation leaves input box");
    CstrState s = equilibrium(center, p);
    std::vector<double> ys{measure(s, noise, rng)};
    std::vector<double> us;
    for (int k = 0; k < nsteps; ++k) {
      const double u = chirp.at(center, k * Ts);
      s = step(s, u, Ts, p);
      us.push_back(u);
      ys.push_back(measure(s, noise, rng));
      const int i = static_cast<int>(ys.size()) - 1;  // index of y_{k+1}
      if (i >= m_y + 2) {
        Eigen::VectorXd w(m_y + 2);
        for (int j = 0; j <= m_y; ++j) w(j) = nm.normY(ys[i - 1 - j]);
        w(m_y + 1) = nm.normU(us[i - 1]);
        raw.add(w, nm.normY(ys[i]));
      }
    }
  }
  return raw;
}

/// Keeps points whose output lies within `radius` (mol/l) of center_y, then
/// removes later points closer than w_bar to any kept point (normalized
/// Euclidean distance). Order preserved.
inline TrainingSet extractLocal(const TrainingSet& raw, double center_y,
                                double radius, double w_bar,
                                const Normalizer& nm) {
  if (radius <= 0.0) throw DimensionMismatch("extractLocal: radius <= 0");
  TrainingSet out;
  for (int i = 0; i < raw.size(); ++i) {
    if (std::abs(nm.denormY(raw.outputs[i]) - center_y) > radius) continue;
    bool tooClose = false;
    for (const auto& wk : out.regressors)
      if ((wk - raw.regressors[i]).norm() < w_bar) {
        tooClose = true;
        break;
      }
    if (!tooClose) out.add(raw.regressors[i], raw.outputs[i]);
  }
  return out;
}

/// Bisects the thinning threshold until the local subset size reaches
/// target_n (within the achievable resolution).
inline TrainingSet extractLocalSized(const TrainingSet& raw, double center_y,
                                     double radius, int target_n,
                                     const Normalizer& nm) {
  double lo = 0.0, hi = 4.0;
  TrainingSet best = extractLocal(raw, center_y, radius, 0.0, nm);
  if (best.size() <= target_n) return best;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    TrainingSet t = extractLocal(raw, center_y, radius, mid, nm);
    if (t.size() >= target_n) {
      lo = mid;
      best = t;
    } else {
      hi = mid;
    }
  }
  return best;
}

inline TrainingSet unionOf(const TrainingSet& a, const TrainingSet& b) {
  TrainingSet u = a;
  for (int i = 0; i < b.size(); ++i) u.add(b.regressors[i], b.outputs[i]);
  return u;
}

}  // namespace rgp
