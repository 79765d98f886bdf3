#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include "rgp/errors.hpp"

namespace rgp {

/// Upper-triangular Cholesky factor R with R^T R = A, supporting O(n^2)
/// insertion and removal of single rows/columns of A. Storage can be
/// reserved up front so appends do not reallocate.
class CholFactor {
 public:
  CholFactor() = default;

  static CholFactor factorize(const Eigen::MatrixXd& a, double jitter = 0.0) {
    if (a.rows() != a.cols())
      throw DimensionMismatch("factorize: matrix not square");
    auto attempt = tryFactorize(a);
    if (!attempt && jitter > 0.0) {
      Eigen::MatrixXd aj = a;
      aj.diagonal().array() += jitter;
      attempt = tryFactorize(aj);
    }
    if (!attempt) throw NotPositiveDefinite("factorize: pivot <= 0");
    CholFactor f;
    f.r_ = std::move(*attempt);
    f.n_ = f.r_.rows();
    return f;
  }

  Eigen::Index size() const { return n_; }
  Eigen::Index capacity() const { return r_.rows(); }
  Eigen::MatrixXd upper() const { return r_.topLeftCorner(n_, n_); }

  Eigen::MatrixXd reconstruct() const {
    const auto r = r_.topLeftCorner(n_, n_);
    return r.transpose() * r;
  }

  double logDet() const {
    return 2.0 * r_.diagonal().head(n_).array().log().sum();
  }

  /// Solves (R^T R) x = b via two triangular solves.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (b.size() != n_) throw DimensionMismatch("solve: wrong rhs size");
    const auto r = r_.topLeftCorner(n_, n_);
    Eigen::VectorXd y = r.transpose().triangularView<Eigen::Lower>().solve(b);
    return r.triangularView<Eigen::Upper>().solve(y);
  }

  /// Grows the backing storage so appends up to `cap` need no reallocation.
  void reserve(Eigen::Index cap) {
    if (cap > r_.rows()) r_.conservativeResize(cap, cap);
  }

  /// Appends one row/column of A in place. `newCol` holds the covariances
  /// against the existing n points, `newDiag` the diagonal entry. O(n^2)
  /// for the triangular solve; only the new column is written.
  void insertBack(const Eigen::VectorXd& newCol, double newDiag) {
    const Eigen::Index n = n_;
    if (newCol.size() != n) throw DimensionMismatch("insertBack: column size");
    if (r_.rows() < n + 1) reserve(std::max<Eigen::Index>(n + 1, 2 * n));

    const auto r11 = r_.topLeftCorner(n, n);
    Eigen::VectorXd s12 =
        r11.transpose().triangularView<Eigen::Lower>().solve(newCol);
    const double s22sq = newDiag - s12.squaredNorm();
    if (!(s22sq > 0.0) || !std::isfinite(s22sq))
      throw NotPositiveDefinite("insertBack: non-positive pivot");

    r_.col(n).head(n) = s12;
    r_.row(n).head(n).setZero();
    r_(n, n) = std::sqrt(s22sq);
    ++n_;
  }

  /// Drops the last row/column of A. O(1): the leading factor is unchanged.
  void removeBack() {
    if (n_ < 1) throw EmptySet("removeBack: empty factor");
    --n_;
  }

  /// Factor of the (n+1)x(n+1) matrix obtained by inserting a row/column at
  /// `pos`. `newCol` holds the covariances against the existing n points in
  /// their current order, `newDiag` the diagonal entry.
  CholFactor inserted(const Eigen::VectorXd& newCol, double newDiag,
                      Eigen::Index pos) const {
    const Eigen::Index n = n_;
    if (newCol.size() != n) throw DimensionMismatch("inserted: column size");
    if (pos < 0 || pos > n) throw DimensionMismatch("inserted: bad position");

    Eigen::MatrixXd s(n + 1, n + 1);  // filled fully below, no pre-zeroing

    const Eigen::Index m = n - pos;  // trailing block size
    const auto r11 = r_.topLeftCorner(pos, pos);
    const auto r13 = r_.block(0, pos, pos, m);
    const auto r33 = r_.block(pos, pos, m, m);

    Eigen::VectorXd s12 =
        r11.transpose().triangularView<Eigen::Lower>().solve(newCol.head(pos));
    const double s22sq = newDiag - s12.squaredNorm();
    if (!(s22sq > 0.0) || !std::isfinite(s22sq))
      throw NotPositiveDefinite("inserted: non-positive pivot");
    const double s22 = std::sqrt(s22sq);
    Eigen::RowVectorXd s23 =
        (newCol.tail(m).transpose() - s12.transpose() * r13) / s22;

    s.topLeftCorner(pos, pos) = r11;  // carries its own zero lower triangle
    s.block(0, pos, pos, 1) = s12;
    s.block(0, pos + 1, pos, m) = r13;
    s.row(pos).head(pos).setZero();
    s(pos, pos) = s22;
    s.block(pos, pos + 1, 1, m) = s23;
    if (m > 0) {
      s.block(pos + 1, 0, m, pos + 1).setZero();
      Eigen::MatrixXd m33 = r33.transpose() * r33 - s23.transpose() * s23;
      auto f33 = tryFactorize(m33);
      if (!f33) throw NotPositiveDefinite("inserted: trailing block not SPD");
      s.block(pos + 1, pos + 1, m, m) = *f33;
    }

    CholFactor out;
    out.r_ = std::move(s);
    out.n_ = n + 1;
    return out;
  }

  /// Factor of the (n-1)x(n-1) matrix with row/column `pos` deleted.
  CholFactor removed(Eigen::Index pos) const {
    const Eigen::Index n = n_;
    if (n < 1) throw EmptySet("removed: empty factor");
    if (pos < 0 || pos >= n) throw DimensionMismatch("removed: bad position");

    const Eigen::Index m = n - pos - 1;
    Eigen::MatrixXd s(n - 1, n - 1);
    s.setZero();
    s.topLeftCorner(pos, pos) = r_.topLeftCorner(pos, pos);
    s.block(0, pos, pos, m) = r_.block(0, pos + 1, pos, m);
    if (m > 0) {
      const auto r23 = r_.block(pos, pos + 1, 1, m);
      const auto r33 = r_.block(pos + 1, pos + 1, m, m);
      Eigen::MatrixXd m33 = r23.transpose() * r23 + r33.transpose() * r33;
      auto f33 = tryFactorize(m33);
      if (!f33) throw NotPositiveDefinite("removed: trailing block not SPD");
      s.block(pos, pos, m, m) = *f33;
    }

    CholFactor out;
    out.r_ = std::move(s);
    out.n_ = n - 1;
    return out;
  }

 private:
  // Plain upper Cholesky; nullopt on a non-positive pivot.
  static std::optional<Eigen::MatrixXd> tryFactorize(
      const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double d = a(j, j) - r.col(j).head(j).squaredNorm();
      if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
      const double rjj = std::sqrt(d);
      r(j, j) = rjj;
      for (Eigen::Index k = j + 1; k < n; ++k) {
        r(j, k) =
            (a(j, k) - r.col(j).head(j).dot(r.col(k).head(j))) / rjj;
      }
    }
    return r;
  }

  Eigen::MatrixXd r_;      // upper triangle of the factor in the n_ x n_ corner
  Eigen::Index n_ = 0;     // logical size; storage may be larger
};

}  // namespace rgp
