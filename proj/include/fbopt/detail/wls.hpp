#pragma once

// Weighted least-squares local fits shared by stencils, interpolation and fold checks.
//
// A fit around `centre` with neighbours x_j uses scaled offsets s_j = (x_j - centre)/h, the
// monomial basis p(s) of degree 1 (M = 3) or 2 (M = 6) and kernel weights w_j. The coefficient
// of neighbour j for a linear functional `ell` on the basis is a_j = w_j p_j^T M^{-1} ell with
// moment matrix M = sum_j w_j p_j p_j^T.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "fbopt/geometry.hpp"

namespace fbopt::detail {

inline constexpr double kernel_decay = 4.0;

/// Gaussian exp(-c q^2), q = r / rf, shifted so it vanishes at the support radius
/// (r in units of h, support radius rf h).
inline double kernel(double r, double rf) {
  const double q = r / rf;
  return q < 1.0 ? std::exp(-kernel_decay * q * q) - std::exp(-kernel_decay) : 0.0;
}

inline double kernel_slope(double r, double rf) {
  const double q = r / rf;
  return q < 1.0 ? -2.0 * kernel_decay * q / rf * std::exp(-kernel_decay * q * q) : 0.0;
}

template <int M>
using BasisVec = Eigen::Matrix<double, M, 1>;

template <int M>
BasisVec<M> basis(double sx, double sy) {
  BasisVec<M> p;
  p(0) = 1.0;
  p(1) = sx;
  p(2) = sy;
  if constexpr (M == 6) {
    p(3) = sx * sx;
    p(4) = sx * sy;
    p(5) = sy * sy;
  }
  return p;
}

/// d p / d s (M x 2).
template <int M>
Eigen::Matrix<double, M, 2> basis_jacobian(double sx, double sy) {
  Eigen::Matrix<double, M, 2> j = Eigen::Matrix<double, M, 2>::Zero();
  j(1, 0) = 1.0;
  j(2, 1) = 1.0;
  if constexpr (M == 6) {
    j(3, 0) = 2.0 * sx;
    j(4, 0) = sy;
    j(4, 1) = sx;
    j(5, 1) = 2.0 * sy;
  }
  return j;
}

/// Functionals on the scaled basis, evaluated at the fit centre.
template <int M>
BasisVec<M> functional_value() {
  BasisVec<M> e = BasisVec<M>::Zero();
  e(0) = 1.0;
  return e;
}

template <int M>
BasisVec<M> functional_dx(double h) {
  BasisVec<M> e = BasisVec<M>::Zero();
  e(1) = 1.0 / h;
  return e;
}

template <int M>
BasisVec<M> functional_dy(double h) {
  BasisVec<M> e = BasisVec<M>::Zero();
  e(2) = 1.0 / h;
  return e;
}

inline BasisVec<6> functional_laplacian(double h) {
  BasisVec<6> e = BasisVec<6>::Zero();
  e(3) = 2.0 / (h * h);
  e(5) = 2.0 / (h * h);
  return e;
}

/// Weighted least-squares fit on the scaled basis around `centre`. With `Centred` the fit
/// passes through the centre value (which must be one of the neighbours) and only the
/// differences f_j - f_centre are fitted with the non-constant terms.
template <int M, bool Centred = false>
class LocalFit {
 public:
  static constexpr int K = Centred ? M - 1 : M;
  using Vec = BasisVec<M>;
  using Fit = Eigen::Matrix<double, K, 1>;
  using Mat = Eigen::Matrix<double, K, K>;

  /// Returns false when the moment matrix is numerically rank deficient.
  bool build(Vec2 centre, std::span<const Vec2> points, std::span<const int> nbrs, double h,
             double rf) {
    centre_ = centre;
    h_ = h;
    rf_ = rf;
    centre_slot_ = -1;
    const std::size_t k = nbrs.size();
    offsets_.resize(k);
    weights_.resize(k);
    basis_.resize(k);
    Mat moment = Mat::Zero();
    for (std::size_t j = 0; j < k; ++j) {
      const Vec2 s = (1.0 / h) * (points[nbrs[j]] - centre);
      offsets_[j] = s;
      weights_[j] = kernel(norm(s), rf);
      basis_[j] = basis<M>(s.x, s.y).template tail<K>();
      if (s.x == 0.0 && s.y == 0.0) centre_slot_ = static_cast<int>(j);
      moment.noalias() += weights_[j] * basis_[j] * basis_[j].transpose();
    }
    if (Centred && centre_slot_ < 0) return false;
    if (k < static_cast<std::size_t>(M)) return false;
    Eigen::LLT<Mat> llt(moment);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) return false;
    inverse_ = llt.solve(Mat::Identity());
    return true;
  }

  /// Coefficients of functional `ell`, one per neighbour.
  void coefficients(const Vec& ell, std::span<double> out) const {
    const Fit z = inverse_ * ell.template tail<K>();
    double sum = 0.0;
    for (std::size_t j = 0; j < weights_.size(); ++j) {
      out[j] = weights_[j] * basis_[j].dot(z);
      sum += out[j];
    }
    if constexpr (Centred) out[centre_slot_] += ell(0) - sum;
  }

  /// Applies functional `ell` to neighbour values f_j.
  double apply(const Vec& ell, std::span<const double> f) const {
    const double fc = Centred ? f[centre_slot_] : 0.0;
    Fit b = Fit::Zero();
    for (std::size_t j = 0; j < weights_.size(); ++j) b += (weights_[j] * (f[j] - fc)) * basis_[j];
    return (Centred ? ell(0) * fc : 0.0) + ell.template tail<K>().dot(inverse_ * b);
  }

  /// Reverse-mode sensitivity of S = mu * sum_j a_j f_j with respect to neighbour positions
  /// and the centre. Adds dS/dx_j to `xbar[nbrs[j]]` and dS/dcentre to `centre_bar`.
  void vjp(const Vec& ell, std::span<const double> f, double mu, std::span<const int> nbrs,
           std::span<Vec2> xbar, Vec2& centre_bar) const {
    if (mu == 0.0) return;
    const double fc = Centred ? f[centre_slot_] : 0.0;
    Fit b = Fit::Zero();
    for (std::size_t j = 0; j < weights_.size(); ++j) b += (weights_[j] * (f[j] - fc)) * basis_[j];
    const Fit z = inverse_ * ell.template tail<K>();
    const Fit q = inverse_ * b;
    Vec2 total{};
    for (std::size_t j = 0; j < weights_.size(); ++j) {
      const Vec2 s = offsets_[j];
      const double r = norm(s);
      const double zp = z.dot(basis_[j]);
      const double residual = f[j] - fc - basis_[j].dot(q);
      const Eigen::Matrix<double, K, 2> jac = basis_jacobian<M>(s.x, s.y).template bottomRows<K>();
      const Eigen::Vector2d bj = residual * (jac.transpose() * z) - zp * (jac.transpose() * q);
      Vec2 g{weights_[j] * bj(0), weights_[j] * bj(1)};
      if (r > 0.0) {
        const double a = zp * residual * kernel_slope(r, rf_) / r;
        g += a * s;
      }
      g *= mu / h_;
      xbar[nbrs[j]] += g;
      total += g;
    }
    centre_bar -= total;
  }

  const Mat& inverse() const { return inverse_; }

 private:
  Vec2 centre_{};
  double h_ = 1.0;
  double rf_ = 2.5;
  int centre_slot_ = -1;
  std::vector<Vec2> offsets_;
  std::vector<double> weights_;
  std::vector<Fit> basis_;
  Mat inverse_ = Mat::Zero();
};

/// Fits behind the differential-operator stencils and the boundary-condition rows.
using StencilFit = LocalFit<6, true>;
using BoundaryFit = LocalFit<3, true>;

/// Degree-1 moving-least-squares weights of the points `nbrs` at `target`. A target that
/// coincides with a node takes that node's value. Returns false when the fit is singular.
inline bool mls_weights(std::span<const Vec2> points, std::span<const int> nbrs, Vec2 target, double h,
                        double rf, std::vector<double>& coeffs) {
  coeffs.assign(nbrs.size(), 0.0);
  for (std::size_t j = 0; j < nbrs.size(); ++j) {
    if (norm(points[nbrs[j]] - target) <= 1e-12 * h) {
      coeffs[j] = 1.0;
      return true;
    }
  }
  LocalFit<3> fit;
  if (!fit.build(target, points, nbrs, h, rf)) return false;
  fit.coefficients(functional_value<3>(), coeffs);
  return true;
}

/// Position sensitivity of mu * sum_j coeffs_j f_j for the weights of `mls_weights`.
inline void mls_vjp(std::span<const Vec2> points, std::span<const int> nbrs, Vec2 target, double h,
                    double rf, std::span<const double> f, double mu, std::span<Vec2> xbar) {
  for (int j : nbrs) {
    if (norm(points[j] - target) <= 1e-12 * h) return;
  }
  LocalFit<3> fit;
  if (!fit.build(target, points, nbrs, h, rf)) return;
  Vec2 unused{};
  fit.vjp(functional_value<3>(), f, mu, nbrs, xbar, unused);
}

}  // namespace fbopt::detail
