#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <vector>

namespace rgp::detail {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Minimizes f over R^d from x0 with the standard simplex moves.
inline NelderMeadResult nelderMead(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x0, double initialStep, int maxEvals,
    double xtol = 1e-6, double ftol = 1e-10) {
  const int d = static_cast<int>(x0.size());
  NelderMeadResult res;

  struct Vertex {
    Eigen::VectorXd x;
    double v;
  };
  std::vector<Vertex> s;
  s.reserve(d + 1);
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    return f(x);
  };
  s.push_back({x0, eval(x0)});
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd x = x0;
    x(i) += initialStep;
    s.push_back({x, eval(x)});
  }

  auto order = [&] {
    std::sort(s.begin(), s.end(),
              [](const Vertex& a, const Vertex& b) { return a.v < b.v; });
  };
  order();

  while (res.evaluations < maxEvals) {
    const double spread = s.back().v - s.front().v;
    double xspread = 0.0;
    for (int i = 1; i <= d; ++i)
      xspread = std::max(xspread, (s[i].x - s[0].x).lpNorm<Eigen::Infinity>());
    if (spread < ftol && xspread < xtol) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) centroid += s[i].x;
    centroid /= d;

    Eigen::VectorXd xr = centroid + (centroid - s[d].x);
    const double vr = eval(xr);
    if (vr < s[0].v) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - s[d].x);
      const double ve = eval(xe);
      s[d] = ve < vr ? Vertex{xe, ve} : Vertex{xr, vr};
    } else if (vr < s[d - 1].v) {
      s[d] = {xr, vr};
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (s[d].x - centroid);
      const double vc = eval(xc);
      if (vc < s[d].v) {
        s[d] = {xc, vc};
      } else {
        for (int i = 1; i <= d; ++i) {
          s[i].x = s[0].x + 0.5 * (s[i].x - s[0].x);
          s[i].v = eval(s[i].x);
        }
      }
    }
    order();
  }

  res.x = s[0].x;
  res.value = s[0].v;
  return res;
}

}  // namespace rgp::detail
