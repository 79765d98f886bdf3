#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "rgp/errors.hpp"
#include "rgp/gp.hpp"
#include "rgp/narx.hpp"

namespace rgp {

/// Companion-form linearization of the one-step predictor in normalized
/// units: x+ = A x + b u (deviations from the reference).
struct LinearModel {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

/// First row and input column from the posterior-mean gradient at the
/// reference regressor; remaining rows shift the history.
inline LinearModel linearize(const GpModel& model,
                             const Eigen::VectorXd& w_ref) {
  const int nw = static_cast<int>(w_ref.size());
  const int nx = nw - 1;
  Eigen::VectorXd g = model.posteriorMeanGradient(w_ref);
  LinearModel lin;
  lin.A = Eigen::MatrixXd::Zero(nx, nx);
  lin.A.row(0) = g.head(nx).transpose();
  for (int i = 1; i < nx; ++i) lin.A(i, i - 1) = 1.0;
  lin.b = Eigen::VectorXd::Zero(nx);
  lin.b(0) = g(nx);
  return lin;
}

/// Terminal ingredients: local feedback gain and quadratic cost matrix.
struct TerminalPair {
  Eigen::VectorXd k;
  Eigen::MatrixXd P;
  Eigen::MatrixXd G;  // P^{-1}, the maximized ellipsoid shape
  Eigen::VectorXd s;  // G k
};

/// Half-space q^T x <= r in deviation coordinates.
struct HalfSpace {
  Eigen::VectorXd q;
  double r;
};

inline double spectralRadius(const Eigen::MatrixXd& m) {
  return m.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {

/// Assembles the three LMI block families for given (G, s).
/// constant=true includes the fixed scalar corners (r^2, t^2).
inline std::vector<Eigen::MatrixXd> sdpBlocks(
    const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
    const std::vector<HalfSpace>& states, const std::vector<double>& inputs,
    const Eigen::MatrixXd& G, const Eigen::VectorXd& s, bool constant) {
  const int n = static_cast<int>(A.rows());
  std::vector<Eigen::MatrixXd> blocks;

  Eigen::MatrixXd contraction(2 * n, 2 * n);
  const Eigen::MatrixXd acl = A * G + b * s.transpose();
  contraction.topLeftCorner(n, n) = G;
  contraction.topRightCorner(n, n) = acl.transpose();
  contraction.bottomLeftCorner(n, n) = acl;
  contraction.bottomRightCorner(n, n) = G;
  blocks.push_back(contraction);

  for (const auto& hs : states) {
    Eigen::MatrixXd m(n + 1, n + 1);
    m.topLeftCorner(n, n) = G;
    m.topRightCorner(n, 1) = G * hs.q;
    m.bottomLeftCorner(1, n) = (G * hs.q).transpose();
    m(n, n) = constant ? hs.r * hs.r : 0.0;
    blocks.push_back(m);
  }

  for (double t : inputs) {
    Eigen::MatrixXd m(n + 1, n + 1);
    m.topLeftCorner(n, n) = G;
    m.topRightCorner(n, 1) = s;
    m.bottomLeftCorner(1, n) = s.transpose();
    m(n, n) = constant ? t * t : 0.0;
    blocks.push_back(m);
  }
  return blocks;
}

inline bool allPositiveDefinite(const std::vector<Eigen::MatrixXd>& blocks,
                                const Eigen::MatrixXd& G) {
  auto pd = [](const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    return llt.info() == Eigen::Success;
  };
  if (!pd(G)) return false;
  for (const auto& b : blocks)
    if (!pd(b)) return false;
  return true;
}

}  // namespace detail

/// Maximizes log det G subject to the contraction LMI and the state/input
/// containment LMIs, by a log-det barrier path-following method with exact
/// Newton steps. Self-contained; sized for n_x <= 4.
inline TerminalPair designTerminal(const LinearModel& lin,
                                   const std::vector<HalfSpace>& states,
                                   const std::vector<double>& inputs) {
  const int n = static_cast<int>(lin.A.rows());
  if (lin.b.size() != n) throw DimensionMismatch("designTerminal: b size");
  for (const auto& hs : states)
    if (hs.q.size() != n || hs.r <= 0.0)
      throw DimensionMismatch("designTerminal: bad half-space");
  for (double t : inputs)
    if (t <= 0.0) throw DimensionMismatch("designTerminal: bad input level");

  // Symmetric-matrix coordinate basis for G plus the s coordinates.
  const int ng = n * (n + 1) / 2;
  const int nz = ng + n;
  std::vector<Eigen::MatrixXd> gBasis;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
      e(i, j) = e(j, i) = 1.0;
      gBasis.push_back(e);
    }

  auto unpack = [&](const Eigen::VectorXd& z, Eigen::MatrixXd& G,
                    Eigen::VectorXd& s) {
    G = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < ng; ++i) G += z(i) * gBasis[i];
    s = z.tail(n);
  };

  // Per-coordinate derivative blocks (the LMIs are affine in z).
  std::vector<std::vector<Eigen::MatrixXd>> dBlocks(nz);
  for (int i = 0; i < nz; ++i) {
    Eigen::MatrixXd Gi = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd si = Eigen::VectorXd::Zero(n);
    if (i < ng)
      Gi = gBasis[i];
    else
      si(i - ng) = 1.0;
    dBlocks[i] =
        detail::sdpBlocks(lin.A, lin.b, states, inputs, Gi, si, false);
  }

  // Strictly feasible start: deadbeat-like stabilizing gain, Lyapunov
  // matrix, then shrink the ellipsoid into the scalar constraints.
  if (std::abs(lin.b(0)) < 1e-12)
    throw Infeasible("designTerminal: input has no effect (b1 = 0)");
  Eigen::VectorXd k0 = -lin.A.row(0).transpose() / lin.b(0);
  Eigen::MatrixXd acl0 = lin.A + lin.b * k0.transpose();
  if (spectralRadius(acl0) >= 1.0 - 1e-9)
    throw Infeasible("designTerminal: could not stabilize");
  Eigen::MatrixXd P0 = Eigen::MatrixXd::Identity(n, n);
  for (int it = 0; it < 10000; ++it) {
    Eigen::MatrixXd next = acl0.transpose() * P0 * acl0 +
                           Eigen::MatrixXd::Identity(n, n);
    if ((next - P0).norm() < 1e-14) {
      P0 = next;
      break;
    }
    P0 = next;
  }
  const Eigen::MatrixXd G1 = P0.inverse();
  double c = 1.0;
  for (const auto& hs : states)
    c = std::min(c, 0.25 * hs.r * hs.r / hs.q.dot(G1 * hs.q));
  const double kGk = k0.dot(G1 * k0);
  for (double t : inputs) c = std::min(c, 0.25 * t * t / kGk);

  Eigen::VectorXd z(nz);
  {
    const Eigen::MatrixXd G0 = c * G1;
    const Eigen::VectorXd s0 = G0 * k0;
    int idx = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) z(idx++) = G0(i, j);
    z.tail(n) = s0;
  }

  auto phi = [&](const Eigen::VectorXd& zz, double t) {
    Eigen::MatrixXd G;
    Eigen::VectorXd s;
    unpack(zz, G, s);
    Eigen::LLT<Eigen::MatrixXd> lltG(G);
    if (lltG.info() != Eigen::Success)
      return -std::numeric_limits<double>::infinity();
    auto blocks = detail::sdpBlocks(lin.A, lin.b, states, inputs, G, s, true);
    double v = 0.0;
    for (const auto& m : blocks) {
      Eigen::LLT<Eigen::MatrixXd> llt(m);
      if (llt.info() != Eigen::Success)
        return -std::numeric_limits<double>::infinity();
      v += 2.0 * Eigen::MatrixXd(llt.matrixL())
                     .diagonal()
                     .array()
                     .log()
                     .sum();
    }
    const double logdetG = 2.0 * Eigen::MatrixXd(lltG.matrixL())
                                     .diagonal()
                                     .array()
                                     .log()
                                     .sum();
    return t * logdetG + v;
  };

  if (!std::isfinite(phi(z, 1.0)))
    throw Infeasible("designTerminal: initial point not strictly feasible");

  for (double t = 1.0; t <= 1.1e9; t *= 10.0) {
    for (int newton = 0; newton < 80; ++newton) {
      Eigen::MatrixXd G;
      Eigen::VectorXd s;
      unpack(z, G, s);
      auto blocks =
          detail::sdpBlocks(lin.A, lin.b, states, inputs, G, s, true);
      const Eigen::MatrixXd Ginv = G.inverse();
      std::vector<Eigen::MatrixXd> binv;
      binv.reserve(blocks.size());
      for (const auto& m : blocks) binv.push_back(m.inverse());

      Eigen::VectorXd grad = Eigen::VectorXd::Zero(nz);
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(nz, nz);
      std::vector<std::vector<Eigen::MatrixXd>> mid(nz);
      for (int i = 0; i < nz; ++i) {
        if (i < ng) grad(i) += t * (Ginv * gBasis[i]).trace();
        mid[i].reserve(blocks.size());
        for (size_t jb = 0; jb < blocks.size(); ++jb) {
          mid[i].push_back(binv[jb] * dBlocks[i][jb]);
          grad(i) += mid[i][jb].trace();
        }
      }
      for (int i = 0; i < nz; ++i)
        for (int j = i; j < nz; ++j) {
          double h = 0.0;
          if (i < ng && j < ng)
            h -= t * (Ginv * gBasis[i] * Ginv * gBasis[j]).trace();
          for (size_t jb = 0; jb < blocks.size(); ++jb)
            h -= (mid[i][jb] * mid[j][jb]).trace();
          hess(i, j) = hess(j, i) = h;
        }

      Eigen::VectorXd stepDir = -hess.ldlt().solve(grad);
      const double decrement = -grad.dot(stepDir);  // = g^T H^{-1} g <= 0
      if (!std::isfinite(decrement)) break;
      const double base = phi(z, t);
      double alpha = 1.0;
      Eigen::VectorXd zNew = z;
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        Eigen::VectorXd cand = z + alpha * stepDir;
        if (phi(cand, t) > base) {
          zNew = cand;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) break;
      z = zNew;
      if (std::abs(decrement) < 1e-10 * (1.0 + t)) break;
    }
  }

  TerminalPair out;
  Eigen::VectorXd s;
  unpack(z, out.G, s);
  out.s = s;
  out.P = out.G.inverse();
  out.P = 0.5 * (out.P + out.P.transpose());
  out.k = out.P * s;
  const Eigen::MatrixXd acl = lin.A + lin.b * out.k.transpose();
  if (spectralRadius(acl) >= 1.0)
    throw Infeasible("designTerminal: closed loop not contractive");
  return out;
}

/// Box-derived terminal design in normalized units: state half-spaces bound
/// every output entry of the deviation, input levels bound the feedback.
inline TerminalPair designTerminalForBoxes(const LinearModel& lin,
                                           const Normalizer& nm,
                                           double y_ref, double u_ref) {
  const int n = static_cast<int>(lin.A.rows());
  const double yr = nm.normY(y_ref);
  const double ur = nm.normU(u_ref);
  std::vector<HalfSpace> states;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e(i) = 1.0;
    states.push_back({e, 1.0 - yr});
    states.push_back({-e, yr});
  }
  std::vector<double> inputs{1.0 - ur, ur};
  return designTerminal(lin, states, inputs);
}

/// Converts a normalized-unit terminal pair to original units.
inline TerminalPair toOriginalUnits(const TerminalPair& tp,
                                    const Normalizer& nm) {
  TerminalPair out = tp;
  out.k = tp.k * (nm.uRange() / nm.yRange());
  out.P = tp.P / (nm.yRange() * nm.yRange());
  out.G = tp.G * (nm.yRange() * nm.yRange());
  out.s = tp.G * tp.k * nm.uRange();  // kept consistent with k, G
  return out;
}

}  // namespace rgp
