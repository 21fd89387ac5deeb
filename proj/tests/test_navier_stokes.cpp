#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fbopt/errors.hpp"
#include "fbopt/navier_stokes.hpp"
#include "fbopt/verify.hpp"

using namespace fbopt;

namespace {

navier_stokes::Config coarse(double t_final) {
  navier_stokes::Config cfg;
  cfg.t_final = t_final;
  cfg.spacing = 0.25;
  return cfg;
}

double l2(const Field& f, const PointCloud& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!c.is_boundary(i)) s += c.weights[i] * f[i] * f[i];
  return std::sqrt(s);
}

ControlVector perturbed(const navier_stokes::Config& cfg, double amp) {
  ControlVector c = navier_stokes::zero_control(cfg);
  for (int n = 1; n <= c.slices; ++n)
    for (int k = 0; k < c.width; ++k) c.slice(n)[k] = amp * std::sin(0.3 * n + 0.7 * k);
  return c;
}

}  // namespace

TEST(NavierStokesConfig, Defaults) {
  const navier_stokes::Config cfg;
  EXPECT_EQ(cfg.nu, 10.0);
  EXPECT_EQ(cfg.sigma, 0.005);
  EXPECT_EQ(cfg.tau, 0.005);
  EXPECT_EQ(cfg.t_final, 2.5);
  EXPECT_EQ(cfg.u_max, 3.0);
  EXPECT_EQ(cfg.tank.width, 5.0);
  EXPECT_EQ(cfg.tank.height, 5.0);
  EXPECT_EQ(cfg.grid().n_steps, 500);
}

TEST(Outflow, ParabolicProfile) {
  const navier_stokes::Config cfg;
  const double x = cfg.tank.width;
  const double lo = cfg.tank.outflow_lo, hi = cfg.tank.outflow_hi;
  EXPECT_NEAR(norm(navier_stokes::outflow_profile({x, 0.5 * (lo + hi)}, cfg)), 3.0, 1e-12);
  EXPECT_NEAR(norm(navier_stokes::outflow_profile({x, lo}, cfg)), 0.0, 1e-12);
  EXPECT_NEAR(norm(navier_stokes::outflow_profile({x, hi}, cfg)), 0.0, 1e-12);
  EXPECT_GT(navier_stokes::outflow_profile({x, 0.5 * (lo + hi)}, cfg).x, 0.0);
}

TEST(Forward, RestStateIsFixedPoint) {
  navier_stokes::Config cfg = coarse(0.05);
  cfg.u_max = 0.0;
  const navier_stokes::Trajectory t = navier_stokes::forward_solve(cfg, navier_stokes::zero_control(cfg));
  const PointCloud& first = t.levels.front().cloud;
  for (const navier_stokes::Level& l : t.levels) {
    ASSERT_EQ(l.cloud.size(), first.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
      EXPECT_LE(norm(l.cloud.positions[i] - first.positions[i]), 1e-10);
      EXPECT_LE(norm(l.u[i]), 1e-10);
      EXPECT_LE(std::abs(l.p[i]), 1e-10);
    }
  }
  EXPECT_EQ(navier_stokes::cost(t, cfg), 0.0);
  const navier_stokes::Adjoint adj = navier_stokes::adjoint_solve(t, navier_stokes::zero_control(cfg), cfg);
  for (const Field& lp : adj.lambda_p)
    for (double v : lp) EXPECT_EQ(v, 0.0);
  for (double v : adj.dcost.values) EXPECT_EQ(v, 0.0);
}

// Divergence of u-tilde and u after one step from a perturbed rest state; `margin` drops
// points that close to the boundary.
std::pair<double, double> projected_divergence(navier_stokes::Config cfg, double margin) {
  cfg.t_final = cfg.tau;
  cfg.u_max = 0.0;
  const double w = cfg.tank.width, h = cfg.tank.height;
  navier_stokes::Level level = navier_stokes::initial_level(cfg);
  for (std::size_t i = 0; i < level.cloud.size(); ++i) {
    const Vec2 p = level.cloud.positions[i];
    const double sx = std::sin(std::numbers::pi * p.x / w), sy = std::sin(std::numbers::pi * p.y / h);
    level.u[i] = Vec2{sx * sy, 0.5 * sx * sx * sy};
  }
  const ControlVector zero = navier_stokes::zero_control(cfg);
  const auto [step, next] = navier_stokes::forward_step(level, zero.slice(1), cfg);
  const Field before = apply_divergence(next.stencils, next.u_tilde);
  const Field after = apply_divergence(next.stencils, next.u);
  double b = 0.0, a = 0.0;
  for (std::size_t i = 0; i < next.cloud.size(); ++i) {
    if (next.cloud.is_boundary(i) || distance_to_ring(next.cloud, next.cloud.positions[i]) < margin) continue;
    b += next.cloud.weights[i] * before[i] * before[i];
    a += next.cloud.weights[i] * after[i] * after[i];
  }
  return {std::sqrt(b), std::sqrt(a)};
}

TEST(Forward, ProjectionReducesDivergence) {
  navier_stokes::Config open = coarse(0.005);
  open.tank.obstacles.clear();
  const auto [b0, a0] = projected_divergence(open, 0.0);
  EXPECT_GT(b0, 0.1);
  EXPECT_LE(a0, 0.1 * b0);
  // re-entrant obstacle corners make the pressure gradient singular; away from them the
  // projection still removes most of the divergence
  const navier_stokes::Config tank = coarse(0.005);
  const auto [b1, a1] = projected_divergence(tank, 2.5 * tank.spacing);
  EXPECT_LE(a1, 0.1 * b1);
}

TEST(Cost, SingleInteriorStep) {
  const navier_stokes::Config cfg = coarse(0.01);
  navier_stokes::Trajectory t = navier_stokes::forward_solve(cfg, navier_stokes::zero_control(cfg));
  ASSERT_EQ(t.levels.size(), 3u);
  const PointCloud& c = t.levels[1].cloud;
  const double length = boundary_integral(c, tank_segment::free, Field(c.size(), 1.0));
  for (auto& l : t.levels) l.u.assign(l.cloud.size(), Vec2{5.0, 5.0});
  t.levels[1].u.assign(c.size(), Vec2{0.6, 0.8});
  EXPECT_NEAR(navier_stokes::cost(t, cfg), 0.5 * cfg.tau * length, 1e-14);
  for (auto& l : t.levels) l.u.assign(l.cloud.size(), Vec2{});
  EXPECT_EQ(navier_stokes::cost(t, cfg), 0.0);
}

TEST(Adjoint, TerminalConditionAndShape) {
  const navier_stokes::Config cfg = coarse(0.02);
  const ControlVector c = perturbed(cfg, 1.0);
  const navier_stokes::Trajectory t = navier_stokes::forward_solve(cfg, c);
  const navier_stokes::Adjoint adj = navier_stokes::adjoint_solve(t, c, cfg);
  const int steps = cfg.grid().n_steps;
  ASSERT_EQ(adj.lambda_u.size(), static_cast<std::size_t>(steps + 1));
  for (Vec2 v : adj.lambda_u.back()) EXPECT_EQ(norm(v), 0.0);
  const std::size_t inflow = navier_stokes::inflow_points(t.levels.front().cloud).size();
  EXPECT_EQ(adj.dcost.slices, steps);
  EXPECT_EQ(adj.dcost.width, static_cast<int>(inflow));
  const ControlVector g = navier_stokes::gradient(adj, t, cfg);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g.values[i], adj.dcost.values[i], 1e-12 * (1.0 + std::abs(g.values[i])));
}

TEST(Gradient, ZeroPressureMultiplier) {
  const navier_stokes::Config cfg = coarse(0.01);
  const navier_stokes::Trajectory t = navier_stokes::forward_solve(cfg, navier_stokes::zero_control(cfg));
  navier_stokes::Adjoint adj;
  for (const auto& l : t.levels) {
    adj.lambda_p.emplace_back(l.cloud.size(), 0.0);
    adj.lambda_u.emplace_back(l.cloud.size());
  }
  for (double v : navier_stokes::gradient(adj, t, cfg).values) EXPECT_EQ(v, 0.0);
}

TEST(Adjoint, MatchesFiniteDifferences) {
  const navier_stokes::Config cfg = coarse(0.05);
  const verify::GradCheckReport r =
      verify::fd_gradient_check(navier_stokes::make_problem(cfg), perturbed(cfg, 1.0), {});
  EXPECT_EQ(r.directions(), 5);
  EXPECT_LE(r.worst_relerr(), 0.10);
}

TEST(Adjoint, DomainVariationMatters) {
  // the discrete adjoint is exact to FD noise; dropping the position terms leaves a visible gap
  const navier_stokes::Config cfg = coarse(0.05);
  verify::GradCheckOptions g;
  g.directions = 3;
  const double with = verify::fd_gradient_check(navier_stokes::make_problem(cfg), perturbed(cfg, 1.0), g).worst_relerr();
  AdjointOptions o;
  o.domain_variation = false;
  const double without =
      verify::fd_gradient_check(navier_stokes::make_problem(cfg, o), perturbed(cfg, 1.0), g).worst_relerr();
  EXPECT_LE(with, 1e-6);
  EXPECT_GE(without, 100.0 * with);
  EXPECT_GE(without, 1e-4);
}
