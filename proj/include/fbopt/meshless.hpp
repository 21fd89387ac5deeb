#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fbopt/detail/wls.hpp"
#include "fbopt/geometry.hpp"

namespace fbopt {

/// Weighted least-squares stencils: for every point, a neighbour list and weight rows for
/// value, d/dx, d/dy and the Laplacian, exact on quadratics. Boundary points also carry
/// first-order derivative rows `ndx`, `ndy` used by boundary conditions.
struct StencilSet {
  double h = 0.0;
  std::vector<double> radius_factor;  // per point, enlarged where the default support is too sparse or singular
  std::vector<int> start;
  std::vector<int> nbr;
  std::vector<double> value;
  std::vector<double> dx;
  std::vector<double> dy;
  std::vector<double> lap;
  std::vector<double> ndx;  // zero on interior points
  std::vector<double> ndy;

  std::size_t size() const { return start.empty() ? 0 : start.size() - 1; }
  std::span<const int> neighbours(std::size_t i) const {
    return {nbr.data() + start[i], static_cast<std::size_t>(start[i + 1] - start[i])};
  }
};

inline constexpr double default_radius_factor = 2.5;

/// Throws StencilError naming the point when its neighbourhood cannot support a quadratic fit.
StencilSet build_stencils(const PointCloud& cloud, double radius_factor = default_radius_factor);

VectorField apply_gradient(const StencilSet& s, std::span<const double> f);
Field apply_divergence(const StencilSet& s, std::span<const Vec2> v);
Field apply_laplacian(const StencilSet& s, std::span<const double> f);

/// Transposes of the gradient and divergence rows.
Field gradient_transpose(const StencilSet& s, std::span<const Vec2> gbar);
VectorField divergence_transpose(const StencilSet& s, std::span<const double> dbar);

/// Boundary row alpha*y + beta*dy/dn, with dy/dn from the first-order rows.
struct BoundaryCondition {
  double alpha = 1.0;
  double beta = 0.0;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Interior rows reaction*y - diffusion*Lap y; boundary rows from `bc[i]`.
SparseMatrix assemble_operator(const StencilSet& s, const PointCloud& cloud, double reaction, double diffusion,
                               std::span<const BoundaryCondition> bc);

struct LinearSystem {
  SparseMatrix matrix;
  Eigen::VectorXd rhs;
};

/// Sparse LU with residual check, refinement and a BiCGSTAB fallback. Solves with the matrix
/// and with its transpose.
class LinearSolver {
 public:
  explicit LinearSolver(const SparseMatrix& a, double tol = 1e-10);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::VectorXd solve_transpose(const Eigen::VectorXd& b) const;

 private:
  Eigen::SparseMatrix<double> a_;
  Eigen::SparseMatrix<double> at_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
  double tol_;

  Eigen::VectorXd solve_with(const Eigen::SparseMatrix<double>& m, bool transpose, const Eigen::VectorXd& b) const;
};

Eigen::VectorXd solve_linear(const LinearSystem& sys, double tol = 1e-10);

/// Solves reaction*y - Lap y = rhs (+ reaction*carry) inside and y + kappa dy/dn = g on the
/// boundary. `g` is indexed by point; only boundary entries are read.
Field solve_robin_poisson(const StencilSet& s, const PointCloud& cloud, std::span<const double> rhs, double kappa,
                          std::span<const double> g, double reaction = 0.0,
                          std::optional<std::span<const double>> advect_carry = std::nullopt);

/// Degree-1 moving least squares of `values` at `targets`. Throws ExtrapolationError for a
/// target without enough source points within radius_factor*h.
Field interpolate(const PointCloud& source, std::span<const double> values, std::span<const Vec2> targets,
                  double radius_factor = default_radius_factor);

// ---------------------------------------------------------------------------
// Reverse-mode helpers. Each adds position sensitivities to `xbar` (and normal
// sensitivities to `nbar` where normals enter).

/// Local fits of a stencil set, rebuilt for sensitivity sweeps.
class StencilFits {
 public:
  StencilFits(const PointCloud& cloud, const StencilSet& s);

  /// Adds d/dX of mu * (row_ell . f) at point i.
  void row_vjp(std::size_t i, const detail::BasisVec<6>& ell, std::span<const double> f, double mu,
               std::span<Vec2> xbar) const;
  /// Same for the first-order boundary rows.
  void boundary_row_vjp(std::size_t i, const detail::BasisVec<3>& ell, std::span<const double> f, double mu,
                        std::span<Vec2> xbar) const;

  const StencilSet& stencils() const { return s_; }

 private:
  const StencilSet& s_;
  std::vector<detail::StencilFit> fits_;
  std::vector<detail::BoundaryFit> boundary_fits_;
  mutable std::vector<double> local_;
};

/// Adds -sum_i mu_i d(A y)_i/dX for the operator of `assemble_operator`.
void operator_vjp(const PointCloud& cloud, const StencilFits& fits, double diffusion,
                  std::span<const BoundaryCondition> bc, std::span<const double> y, std::span<const double> mu,
                  std::span<Vec2> xbar, std::span<Vec2> nbar);

/// Position part of <gbar, grad f>.
void gradient_vjp(const StencilFits& fits, std::span<const double> f, std::span<const Vec2> gbar,
                  std::span<Vec2> xbar);

/// Position part of <dbar, div v>.
void divergence_vjp(const StencilFits& fits, std::span<const Vec2> v, std::span<const double> dbar,
                    std::span<Vec2> xbar);

/// Chord normals: turns normal sensitivities into position sensitivities.
void normals_vjp(const PointCloud& cloud, std::span<const Vec2> nbar, std::span<Vec2> xbar);

/// Boundary arclength weights: turns weight sensitivities into position sensitivities.
void arclength_vjp(const PointCloud& cloud, std::span<const double> wbar, std::span<Vec2> xbar);

/// Helpers for solves: per-point boundary conditions and Eigen conversions.
std::vector<BoundaryCondition> uniform_bc(const PointCloud& cloud, BoundaryCondition bc);
Eigen::VectorXd to_eigen(std::span<const double> f);
Field to_field(const Eigen::VectorXd& v);

}  // namespace fbopt
