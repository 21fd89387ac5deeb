#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fbopt/adjoint.hpp"
#include "fbopt/geometry.hpp"
#include "fbopt/optim.hpp"

namespace fbopt::verify {

/// |a - f| / max(|a|, |f|, 1e-14)
double relative_error(double a, double f);

struct GradCheckRow {
  int direction = 0;
  double h = 0.0;  // actual step, already scaled
  double adjoint = 0.0;
  double fd = 0.0;
  double relerr = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;

  /// Smallest error over the step sizes tried for `direction`.
  double min_relerr(int direction) const;
  /// Largest of the per-direction minima.
  double worst_relerr() const;
  int directions() const;
};

/// Steps 1e-2, 1e-3, ..., 1e-7.
std::vector<double> h_sweep();

struct GradCheckOptions {
  int directions = 5;
  /// Relative steps; each is multiplied by max(1, |c|).
  std::vector<double> h_list{1e-4};
  std::uint64_t seed = 7;
};

/// Central differences (J(c + h d) - J(c - h d)) / 2h against <grad J, d> for random unit
/// directions d. A NaN objective comes through as a NaN error.
GradCheckReport fd_gradient_check(const Problem& problem, const ControlVector& c, const GradCheckOptions& options = {});

/// Writes `direction,h,adjoint,fd,relerr`.
void write_gradcheck(std::ostream& out, const GradCheckReport& report);

struct OrderFit {
  /// Slope q of log e_{k+1} against log e_k: 1 for geometric decrease, above 1 for superlinear.
  double order = 0.0;
  /// Mean log10 decrease per iteration over the same pairs.
  double decades_per_iter = 0.0;
  int pairs = 0;
};

/// Fits the order of a positive, eventually decreasing series. Pairs that change by less than
/// `flatness` (relative) are plateaus and left out. Throws InsufficientDataError with fewer than
/// three usable pairs.
OrderFit convergence_order(std::span<const double> series, double flatness = 0.01);

struct SuiteRow {
  std::string check;
  double spacing = 0.0;  // 0 when the row has no cloud size
  double tau = 0.0;      // 0 when the row has no time step
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool pass = false;
};

struct SuiteOptions {
  std::vector<double> spacings{0.2, 0.1};
  std::vector<double> taus{0.1, 0.05, 0.025};
  /// Steps of the push-forward derivative rows; the tau^2 remainder dominates below about 0.02.
  std::vector<double> pushforward_taus{0.01, 0.005, 0.0025};
  /// Keep the boundary term in the push-forward derivative.
  bool boundary_term = true;
  /// Adjoint used by the Stefan gradient row; zero directions skip that row.
  AdjointOptions stefan_adjoint{};
  int stefan_directions = 2;
};

struct SuiteResult {
  std::vector<SuiteRow> rows;
  bool all_pass() const;
};

SuiteResult shape_calculus_suite(const SuiteOptions& options = {});

/// Writes `check,spacing,tau,value,lo,hi,pass`.
void write_suite(std::ostream& out, const SuiteResult& result);

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Quadrature cloud on a rectangle: n x n tensor Gauss nodes inside (area weights) and n Gauss
/// nodes per edge on the boundary ring (arclength weights, zero strip).
PointCloud gauss_rectangle(const Rectangle& r, int n);

}  // namespace fbopt::verify
