#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rgp/gp.hpp"

namespace rgp {

/// Affine map between original units and [0,1] for outputs and inputs.
struct Normalizer {
  double y_lo = 0.35, y_hi = 0.65;   // mol/l
  double u_lo = 335.0, u_hi = 372.0; // K

  double normY(double y) const { return (y - y_lo) / (y_hi - y_lo); }
  double denormY(double yn) const { return y_lo + yn * (y_hi - y_lo); }
  double normU(double u) const { return (u - u_lo) / (u_hi - u_lo); }
  double denormU(double un) const { return u_lo + un * (u_hi - u_lo); }
  double yRange() const { return y_hi - y_lo; }
  double uRange() const { return u_hi - u_lo; }
};

/// Window of current and past outputs (and optionally past inputs) in
/// original units; element 0 is the newest output.
struct NarxState {
  Eigen::VectorXd outputs;  // [y_k, y_{k-1}, ..., y_{k-m_y}]
  Eigen::VectorXd inputs;   // [u_{k-1}, ..., u_{k-m_u}] (empty when m_u = 0)

  static NarxState constant(double y, int m_y = 2, int m_u = 0) {
    NarxState x;
    x.outputs = Eigen::VectorXd::Constant(m_y + 1, y);
    x.inputs = Eigen::VectorXd::Zero(m_u);
    return x;
  }

  double y() const { return outputs(0); }
  int dim() const {
    return static_cast<int>(outputs.size() + inputs.size());
  }

  Eigen::VectorXd vec() const {
    Eigen::VectorXd v(dim());
    v << outputs, inputs;
    return v;
  }
};

/// Normalized regressor [x; u] fed to the GP.
inline Eigen::VectorXd regressorOf(const NarxState& x, double u,
                                   const Normalizer& nm) {
  Eigen::VectorXd w(x.dim() + 1);
  int idx = 0;
  for (int i = 0; i < x.outputs.size(); ++i) w(idx++) = nm.normY(x.outputs(i));
  for (int i = 0; i < x.inputs.size(); ++i) w(idx++) = nm.normU(x.inputs(i));
  w(idx) = nm.normU(u);
  return w;
}

/// One-step prediction: new head from the GP posterior mean (denormalized),
/// remaining entries shifted.
inline NarxState predictStep(const GpModel& model, const NarxState& x,
                             double u, const Normalizer& nm) {
  NarxState next = x;
  const double ynext = nm.denormY(model.posteriorMean(regressorOf(x, u, nm)));
  for (int i = static_cast<int>(x.outputs.size()) - 1; i > 0; --i)
    next.outputs(i) = x.outputs(i - 1);
  next.outputs(0) = ynext;
  if (x.inputs.size() > 0) {
    for (int i = static_cast<int>(x.inputs.size()) - 1; i > 0; --i)
      next.inputs(i) = x.inputs(i - 1);
    next.inputs(0) = u;
  }
  return next;
}

inline std::vector<NarxState> rollout(const GpModel& model,
                                      const NarxState& x0,
                                      const Eigen::VectorXd& u_seq,
                                      const Normalizer& nm) {
  std::vector<NarxState> seq;
  seq.reserve(u_seq.size() + 1);
  seq.push_back(x0);
  for (int i = 0; i < u_seq.size(); ++i)
    seq.push_back(predictStep(model, seq.back(), u_seq(i), nm));
  return seq;
}

}  // namespace rgp
