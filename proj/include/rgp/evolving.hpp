#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>

#include "rgp/gp.hpp"

namespace rgp {

/// Online training-set management policy: error/variance thresholds for
/// candidate detection and a FIFO capacity bound.
struct EvolvingConfig {
  double e_bar = 0.0;       // prediction-error threshold (output units)
  double sigma2_bar = 0.0;  // posterior-variance threshold
  int capacity_m = std::numeric_limits<int>::max();

  void validate() const {
    if (e_bar < 0.0 || sigma2_bar < 0.0 || capacity_m < 1)
      throw DimensionMismatch("evolving config: bad thresholds/capacity");
  }
};

struct CandidateCheck {
  bool flag = false;
  double prediction_error = 0.0;  // e^p = y_next - posterior mean
  double variance = 0.0;
};

/// A measurement is a candidate for inclusion when the prediction error or
/// the posterior variance at its regressor exceeds its threshold.
inline CandidateCheck isCandidate(const GpModel& model,
                                  const Eigen::VectorXd& w, double y_next,
                                  const EvolvingConfig& cfg) {
  cfg.validate();
  auto [mean, var] = model.posterior(w);
  CandidateCheck out;
  out.prediction_error = y_next - mean;
  out.variance = var;
  out.flag = std::abs(out.prediction_error) > cfg.e_bar ||
             out.variance > cfg.sigma2_bar;
  return out;
}

/// Builds the candidate model for an accepted point: append, then evict the
/// oldest point if the capacity bound would be exceeded. Returns nothing
/// when the point is not a candidate or its regressor nearly duplicates an
/// existing one.
inline std::optional<GpModel> propose(const GpModel& model,
                                      const Eigen::VectorXd& w, double y_next,
                                      const EvolvingConfig& cfg) {
  if (!isCandidate(model, w, y_next, cfg).flag) return std::nullopt;
  for (const auto& wi : model.data().regressors)
    if ((wi - w).norm() < 1e-9) return std::nullopt;
  GpModel candidate = model.withPoint(w, y_next);
  if (candidate.size() > cfg.capacity_m) candidate = candidate.evictOldest();
  return candidate;
}

}  // namespace rgp
