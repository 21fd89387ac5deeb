#include "fbopt/meshless.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>

#include "fbopt/errors.hpp"

namespace fbopt {

using detail::BasisVec;
using detail::LocalFit;

namespace {

constexpr double widen[] = {1.0, 1.3, 1.6, 2.0};
// Fewer neighbours than twice the basis size give near-interpolating, badly scaled boundary rows.
constexpr std::size_t min_neighbours = 12;

bool fit_point(const PointCloud& cloud, const NeighbourGrid& grid, std::size_t i, double rf, bool last,
               detail::StencilFit& fit, std::vector<int>& nbrs) {
  const double h = cloud.spacing;
  grid.within(cloud.positions[i], rf * h, nbrs);
  if (!last && nbrs.size() < min_neighbours) return false;
  return fit.build(cloud.positions[i], cloud.positions, nbrs, h, rf);
}

}  // namespace

StencilSet build_stencils(const PointCloud& cloud, double radius_factor) {
  const double h = cloud.spacing;
  if (!(h > 0.0)) throw StencilError("cloud spacing must be positive");
  StencilSet s;
  s.h = h;
  s.radius_factor.resize(cloud.size());
  s.start.assign(1, 0);
  NeighbourGrid grid(cloud.positions, h);
  std::vector<int> nbrs;
  detail::StencilFit fit;
  const auto e_val = detail::functional_value<6>();
  const auto e_dx = detail::functional_dx<6>(h);
  const auto e_dy = detail::functional_dy<6>(h);
  const auto e_lap = detail::functional_laplacian(h);
  detail::BoundaryFit low;
  const auto b_dx = detail::functional_dx<3>(h);
  const auto b_dy = detail::functional_dy<3>(h);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    bool ok = false;
    for (double wf : widen) {
      const double rf = radius_factor * wf;
      if (fit_point(cloud, grid, i, rf, wf == widen[std::size(widen) - 1], fit, nbrs)) {
        s.radius_factor[i] = rf;
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw StencilError("point " + std::to_string(i) + " at (" + std::to_string(cloud.positions[i].x) + ", " +
                         std::to_string(cloud.positions[i].y) + ") has a rank-deficient neighbourhood (" +
                         std::to_string(nbrs.size()) + " neighbours)");
    }
    const std::size_t base = s.nbr.size();
    const std::size_t k = nbrs.size();
    s.nbr.insert(s.nbr.end(), nbrs.begin(), nbrs.end());
    s.value.resize(base + k);
    s.dx.resize(base + k);
    s.dy.resize(base + k);
    s.lap.resize(base + k);
    fit.coefficients(e_val, std::span<double>(s.value.data() + base, k));
    fit.coefficients(e_dx, std::span<double>(s.dx.data() + base, k));
    fit.coefficients(e_dy, std::span<double>(s.dy.data() + base, k));
    fit.coefficients(e_lap, std::span<double>(s.lap.data() + base, k));
    s.ndx.resize(base + k, 0.0);
    s.ndy.resize(base + k, 0.0);
    if (cloud.is_boundary(i)) {
      if (!low.build(cloud.positions[i], cloud.positions, nbrs, h, s.radius_factor[i])) {
        throw StencilError("boundary point " + std::to_string(i) + " has a degenerate neighbourhood");
      }
      low.coefficients(b_dx, std::span<double>(s.ndx.data() + base, k));
      low.coefficients(b_dy, std::span<double>(s.ndy.data() + base, k));
    }
    s.start.push_back(static_cast<int>(s.nbr.size()));
  }
  return s;
}

VectorField apply_gradient(const StencilSet& s, std::span<const double> f) {
  VectorField g(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (int k = s.start[i]; k < s.start[i + 1]; ++k) {
      g[i].x += s.dx[k] * f[s.nbr[k]];
      g[i].y += s.dy[k] * f[s.nbr[k]];
    }
  }
  return g;
}

Field apply_divergence(const StencilSet& s, std::span<const Vec2> v) {
  Field d(s.size(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (int k = s.start[i]; k < s.start[i + 1]; ++k) d[i] += s.dx[k] * v[s.nbr[k]].x + s.dy[k] * v[s.nbr[k]].y;
  }
  return d;
}

Field apply_laplacian(const StencilSet& s, std::span<const double> f) {
  Field l(s.size(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (int k = s.start[i]; k < s.start[i + 1]; ++k) l[i] += s.lap[k] * f[s.nbr[k]];
  }
  return l;
}

Field gradient_transpose(const StencilSet& s, std::span<const Vec2> gbar) {
  Field f(s.size(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (int k = s.start[i]; k < s.start[i + 1]; ++k) f[s.nbr[k]] += s.dx[k] * gbar[i].x + s.dy[k] * gbar[i].y;
  }
  return f;
}

VectorField divergence_transpose(const StencilSet& s, std::span<const double> dbar) {
  VectorField v(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (int k = s.start[i]; k < s.start[i + 1]; ++k) v[s.nbr[k]] += dbar[i] * Vec2{s.dx[k], s.dy[k]};
  }
  return v;
}

SparseMatrix assemble_operator(const StencilSet& s, const PointCloud& cloud, double reaction, double diffusion,
                               std::span<const BoundaryCondition> bc) {
  const auto n = static_cast<Eigen::Index>(s.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(s.nbr.size() + s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const int row = static_cast<int>(i);
    if (cloud.is_boundary(i)) {
      const BoundaryCondition c = bc[i];
      trip.emplace_back(row, row, c.alpha);
      if (c.beta != 0.0) {
        const Vec2 nv = cloud.normals[i];
        for (int k = s.start[i]; k < s.start[i + 1]; ++k) {
          trip.emplace_back(row, s.nbr[k], c.beta * (nv.x * s.ndx[k] + nv.y * s.ndy[k]));
        }
      }
    } else {
      trip.emplace_back(row, row, reaction);
      for (int k = s.start[i]; k < s.start[i + 1]; ++k) trip.emplace_back(row, s.nbr[k], -diffusion * s.lap[k]);
    }
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  return a;
}

// ---------------------------------------------------------------------------
// Linear solves

LinearSolver::LinearSolver(const SparseMatrix& a, double tol)
    : a_(a), at_(a.transpose()), lu_(std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>()), tol_(tol) {
  if (a.rows() != a.cols()) throw SolverError("operator is not square", 1.0);
  a_.makeCompressed();
  lu_->analyzePattern(a_);
  lu_->factorize(a_);
  if (lu_->info() != Eigen::Success) lu_.reset();
}

Eigen::VectorXd LinearSolver::solve_with(const Eigen::SparseMatrix<double>& m, bool transpose,
                                         const Eigen::VectorXd& b) const {
  const double bnorm = b.norm();
  if (bnorm == 0.0) return Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  double rel = 1.0;
  if (lu_) {
    x = transpose ? Eigen::VectorXd(lu_->transpose().solve(b)) : Eigen::VectorXd(lu_->solve(b));
    for (int sweep = 0; sweep < 3; ++sweep) {
      const Eigen::VectorXd r = b - m * x;
      rel = r.norm() / bnorm;
      if (rel <= tol_ || !std::isfinite(rel)) break;
      x += transpose ? Eigen::VectorXd(lu_->transpose().solve(r)) : Eigen::VectorXd(lu_->solve(r));
    }
    rel = (b - m * x).norm() / bnorm;
    if (rel <= tol_) return x;
  }
  Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::DiagonalPreconditioner<double>> it;
  it.setTolerance(tol_);
  it.setMaxIterations(20 * static_cast<int>(b.size()) + 100);
  it.compute(m);
  const Eigen::VectorXd guess = (lu_ && std::isfinite(rel)) ? x : Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd y = it.solveWithGuess(b, guess);
  const double rel_it = (b - m * y).norm() / bnorm;
  if (rel_it <= tol_) return y;
  throw SolverError("linear solve did not reach tolerance", std::min(rel, rel_it));
}

Eigen::VectorXd LinearSolver::solve(const Eigen::VectorXd& b) const { return solve_with(a_, false, b); }

Eigen::VectorXd LinearSolver::solve_transpose(const Eigen::VectorXd& b) const { return solve_with(at_, true, b); }

Eigen::VectorXd solve_linear(const LinearSystem& sys, double tol) {
  if (sys.rhs.size() != sys.matrix.rows()) throw ShapeMismatchError("right-hand side length does not match operator");
  return LinearSolver(sys.matrix, tol).solve(sys.rhs);
}

Field solve_robin_poisson(const StencilSet& s, const PointCloud& cloud, std::span<const double> rhs, double kappa,
                          std::span<const double> g, double reaction, std::optional<std::span<const double>> advect_carry) {
  if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
  const auto bc = uniform_bc(cloud, {1.0, kappa});
  Eigen::VectorXd b(static_cast<Eigen::Index>(cloud.size()));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.is_boundary(i)) {
      b[i] = g[i];
    } else {
      b[i] = rhs[i] + (advect_carry ? reaction * (*advect_carry)[i] : 0.0);
    }
  }
  return to_field(LinearSolver(assemble_operator(s, cloud, reaction, 1.0, bc)).solve(b));
}

Field interpolate(const PointCloud& source, std::span<const double> values, std::span<const Vec2> targets,
                  double radius_factor) {
  const double h = source.spacing;
  NeighbourGrid grid(source.positions, h);
  std::vector<int> nbrs;
  std::vector<double> coeffs;
  Field out(targets.size(), 0.0);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    grid.within(targets[t], radius_factor * h, nbrs);
    if (nbrs.size() < 3 || !detail::mls_weights(source.positions, nbrs, targets[t], h, radius_factor, coeffs)) {
      throw ExtrapolationError("target (" + std::to_string(targets[t].x) + ", " + std::to_string(targets[t].y) +
                               ") has too few source points within " + std::to_string(radius_factor * h));
    }
    for (std::size_t k = 0; k < nbrs.size(); ++k) out[t] += coeffs[k] * values[nbrs[k]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reverse-mode helpers

StencilFits::StencilFits(const PointCloud& cloud, const StencilSet& s)
    : s_(s), fits_(s.size()), boundary_fits_(s.size()) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    fits_[i].build(cloud.positions[i], cloud.positions, s.neighbours(i), s.h, s.radius_factor[i]);
    if (cloud.is_boundary(i)) {
      boundary_fits_[i].build(cloud.positions[i], cloud.positions, s.neighbours(i), s.h, s.radius_factor[i]);
    }
  }
}

void StencilFits::row_vjp(std::size_t i, const BasisVec<6>& ell, std::span<const double> f, double mu,
                          std::span<Vec2> xbar) const {
  if (mu == 0.0) return;
  const auto nb = s_.neighbours(i);
  local_.resize(nb.size());
  for (std::size_t k = 0; k < nb.size(); ++k) local_[k] = f[nb[k]];
  fits_[i].vjp(ell, local_, mu, nb, xbar, xbar[i]);
}

void StencilFits::boundary_row_vjp(std::size_t i, const BasisVec<3>& ell, std::span<const double> f, double mu,
                                   std::span<Vec2> xbar) const {
  if (mu == 0.0) return;
  const auto nb = s_.neighbours(i);
  local_.resize(nb.size());
  for (std::size_t k = 0; k < nb.size(); ++k) local_[k] = f[nb[k]];
  boundary_fits_[i].vjp(ell, local_, mu, nb, xbar, xbar[i]);
}

void operator_vjp(const PointCloud& cloud, const StencilFits& fits, double diffusion,
                  std::span<const BoundaryCondition> bc, std::span<const double> y, std::span<const double> mu,
                  std::span<Vec2> xbar, std::span<Vec2> nbar) {
  const StencilSet& s = fits.stencils();
  const double h = s.h;
  const auto e_lap = detail::functional_laplacian(h);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (mu[i] == 0.0) continue;
    if (cloud.is_boundary(i)) {
      const double beta = bc[i].beta;
      if (beta == 0.0) continue;
      const Vec2 nv = cloud.normals[i];
      BasisVec<3> ell = BasisVec<3>::Zero();
      ell(1) = nv.x / h;
      ell(2) = nv.y / h;
      fits.boundary_row_vjp(i, ell, y, -mu[i] * beta, xbar);
      Vec2 grad{};
      for (int k = s.start[i]; k < s.start[i + 1]; ++k) grad += y[s.nbr[k]] * Vec2{s.ndx[k], s.ndy[k]};
      nbar[i] += (-mu[i] * beta) * grad;
    } else if (diffusion != 0.0) {
      fits.row_vjp(i, e_lap, y, mu[i] * diffusion, xbar);
    }
  }
}

void gradient_vjp(const StencilFits& fits, std::span<const double> f, std::span<const Vec2> gbar,
                  std::span<Vec2> xbar) {
  const double h = fits.stencils().h;
  for (std::size_t i = 0; i < fits.stencils().size(); ++i) {
    if (gbar[i] == Vec2{}) continue;
    BasisVec<6> ell = BasisVec<6>::Zero();
    ell(1) = gbar[i].x / h;
    ell(2) = gbar[i].y / h;
    fits.row_vjp(i, ell, f, 1.0, xbar);
  }
}

void divergence_vjp(const StencilFits& fits, std::span<const Vec2> v, std::span<const double> dbar,
                    std::span<Vec2> xbar) {
  const std::size_t n = fits.stencils().size();
  Field vx(n), vy(n);
  for (std::size_t i = 0; i < n; ++i) {
    vx[i] = v[i].x;
    vy[i] = v[i].y;
  }
  const double h = fits.stencils().h;
  const auto ex = detail::functional_dx<6>(h);
  const auto ey = detail::functional_dy<6>(h);
  for (std::size_t i = 0; i < n; ++i) {
    if (dbar[i] == 0.0) continue;
    fits.row_vjp(i, ex, vx, dbar[i], xbar);
    fits.row_vjp(i, ey, vy, dbar[i], xbar);
  }
}

void normals_vjp(const PointCloud& cloud, std::span<const Vec2> nbar, std::span<Vec2> xbar) {
  const std::size_t m = cloud.ring.size();
  const double orientation = ring_area(cloud) >= 0.0 ? 1.0 : -1.0;
  for (std::size_t k = 0; k < m; ++k) {
    const int i = cloud.ring[k];
    if (nbar[i] == Vec2{}) continue;
    const int next = cloud.ring[(k + 1) % m];
    const int prev = cloud.ring[(k + m - 1) % m];
    const Vec2 t = cloud.positions[next] - cloud.positions[prev];
    const double len = norm(t);
    const Vec2 nh = cloud.normals[i];
    const Vec2 w = (orientation / len) * (nbar[i] - dot(nh, nbar[i]) * nh);
    const Vec2 tbar{-w.y, w.x};
    xbar[next] += tbar;
    xbar[prev] -= tbar;
  }
}

void arclength_vjp(const PointCloud& cloud, std::span<const double> wbar, std::span<Vec2> xbar) {
  const std::size_t m = cloud.ring.size();
  for (std::size_t k = 0; k < m; ++k) {
    const int i = cloud.ring[k];
    if (wbar[i] == 0.0) continue;
    const int next = cloud.ring[(k + 1) % m];
    const int prev = cloud.ring[(k + m - 1) % m];
    const Vec2 a = cloud.positions[i] - cloud.positions[prev];
    const Vec2 b = cloud.positions[next] - cloud.positions[i];
    const Vec2 ea = (1.0 / norm(a)) * a;
    const Vec2 eb = (1.0 / norm(b)) * b;
    const double c = 0.5 * wbar[i];
    xbar[i] += c * (ea - eb);
    xbar[prev] -= c * ea;
    xbar[next] += c * eb;
  }
}

std::vector<BoundaryCondition> uniform_bc(const PointCloud& cloud, BoundaryCondition bc) {
  return std::vector<BoundaryCondition>(cloud.size(), bc);
}

Eigen::VectorXd to_eigen(std::span<const double> f) {
  return Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
}

Field to_field(const Eigen::VectorXd& v) { return Field(v.data(), v.data() + v.size()); }

}  // namespace fbopt
