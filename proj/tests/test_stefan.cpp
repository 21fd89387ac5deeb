#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fbopt/errors.hpp"
#include "fbopt/stefan.hpp"
#include "fbopt/verify.hpp"

using namespace fbopt;

namespace {

stefan::Config short_run(double t_final, double spacing) {
  stefan::Config cfg;
  cfg.t_final = t_final;
  cfg.spacing = spacing;
  return cfg;
}

}  // namespace

TEST(StefanConfig, Defaults) {
  const stefan::Config cfg;
  EXPECT_EQ(cfg.alpha, 2.0);
  EXPECT_EQ(cfg.beta, -1.0);
  EXPECT_EQ(cfg.kappa, 0.01);
  EXPECT_EQ(cfg.theta_m, 0.0);
  EXPECT_EQ(cfg.tau, 0.01);
  EXPECT_EQ(cfg.t_final, 0.3);
  EXPECT_EQ(cfg.grid().n_steps, 30);
  EXPECT_NO_THROW(cfg.validate());
  stefan::Config bad;
  bad.kappa = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Chi, BumpValues) {
  stefan::Config cfg;
  cfg.chi_grid = {0.0};
  ASSERT_EQ(cfg.chi_centers().size(), 1u);
  const std::vector<Vec2> pts{{0.0, 0.0}, {0.2, 0.0}, {0.0, -0.2}};
  const std::vector<double> coeffs{1.0};
  const Field v = stefan::chi_eval(pts, coeffs, cfg);
  EXPECT_EQ(v[0], 1.0);
  EXPECT_NEAR(v[1], std::exp(-1.0), 1e-15);
  EXPECT_NEAR(v[1], 0.367879, 1e-6);
  EXPECT_NEAR(v[2], std::exp(-1.0), 1e-15);
  EXPECT_EQ(stefan::Config{}.chi_centers().size(), 36u);
}

TEST(Velocity, MeltingTemperatureGivesRest) {
  const stefan::Config cfg;
  const PointCloud c = seed_cloud(Circle{0.5, {0.0, 0.0}}, 0.05);
  const StencilSet s = build_stencils(c);
  const VectorField u = stefan::solve_velocity(Field(c.size(), cfg.theta_m), c, s, cfg);
  for (Vec2 v : u) EXPECT_LE(norm(v), 1e-10);
}

TEST(Velocity, BoundaryDataSign) {
  // theta = theta_m + kappa^2 / beta gives boundary data -kappa n: the boundary recedes
  const stefan::Config cfg;
  const PointCloud c = seed_cloud(Circle{0.5, {0.0, 0.0}}, 0.05);
  const StencilSet s = build_stencils(c);
  const double theta = cfg.theta_m + cfg.kappa * cfg.kappa / cfg.beta;
  const VectorField u = stefan::solve_velocity(Field(c.size(), theta), c, s, cfg);
  for (int i : c.ring) EXPECT_LT(dot(u[i], c.normals[i]), 0.0);
  const VectorField w = stefan::solve_velocity(Field(c.size(), cfg.theta_m + 0.01), c, s, cfg);
  for (int i : c.ring) EXPECT_GT(dot(w[i], c.normals[i]), 0.0);
}

TEST(Velocity, RotationEquivariant) {
  const stefan::Config cfg;
  const PointCloud c = seed_cloud(Circle{0.5, {0.0, 0.0}}, 0.05);
  const double a = 0.7, ca = std::cos(a), sa = std::sin(a);
  auto rot = [&](Vec2 v) { return Vec2{ca * v.x - sa * v.y, sa * v.x + ca * v.y}; };
  PointCloud r = c;
  for (Vec2& p : r.positions) p = rot(p);
  r = outward_normals(r);
  Field theta(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) theta[i] = 0.01 * (1.0 + c.positions[i].x + 2.0 * c.positions[i].y * c.positions[i].y);
  const VectorField u = stefan::solve_velocity(theta, c, build_stencils(c), cfg);
  const VectorField ur = stefan::solve_velocity(theta, r, build_stencils(r), cfg);
  double scale = 0.0;
  for (Vec2 v : u) scale = std::max(scale, norm(v));
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec2 e = ur[i] - rot(u[i]);
    EXPECT_LE(norm(e), 1e-8 * scale);
  }
}

TEST(Forward, MeltingTemperatureIsFixedPoint) {
  const stefan::Config cfg = short_run(0.05, 0.1);
  const stefan::Trajectory t = stefan::forward_solve(cfg, stefan::zero_control(cfg));
  ASSERT_EQ(t.levels.size(), 6u);
  const auto& first = t.levels.front();
  const auto& last = t.levels.back();
  ASSERT_EQ(first.cloud.size(), last.cloud.size());
  for (std::size_t i = 0; i < first.cloud.size(); ++i) {
    EXPECT_LE(norm(last.cloud.positions[i] - first.cloud.positions[i]), 1e-12);
    EXPECT_LE(std::abs(last.theta[i] - cfg.theta_m), 1e-12);
  }
}

TEST(Forward, WarmDomainGrows) {
  // beta = -1: theta above theta_m pushes the boundary outward, (beta/kappa)(theta_m - theta) > 0
  stefan::Config cfg = short_run(0.03, 0.1);
  cfg.theta0 = 0.01;
  const stefan::Trajectory t = stefan::forward_solve(cfg, stefan::zero_control(cfg));
  const auto& l0 = t.levels.front();
  for (int i : l0.cloud.ring) EXPECT_GT(dot(l0.u[i], l0.cloud.normals[i]), 0.0);
  for (std::size_t n = 1; n < t.levels.size(); ++n) EXPECT_GT(ring_area(t.levels[n].cloud), ring_area(t.levels[n - 1].cloud));
}

TEST(Forward, FirstOrderInTime) {
  // enclosed area at T under tau, tau/2, tau/4: successive differences shrink by about 2
  auto area = [](double tau) {
    stefan::Config cfg = short_run(0.04, 0.1);
    cfg.tau = tau;
    cfg.theta0 = 0.01;
    const stefan::Trajectory t = stefan::forward_solve(cfg, stefan::zero_control(cfg));
    return ring_area(t.levels.back().cloud);
  };
  const double a1 = area(0.02), a2 = area(0.01), a3 = area(0.005);
  const double ratio = (a1 - a2) / (a2 - a3);
  EXPECT_GE(ratio, 1.5);
  EXPECT_LE(ratio, 2.7);
}

TEST(Forward, ControlLengthChecked) {
  const stefan::Config cfg = short_run(0.05, 0.1);
  EXPECT_THROW(stefan::forward_solve(cfg, ControlVector(3, 36, cfg.tau)), ShapeMismatchError);
}

TEST(Cost, UnitCircleAndRadiusR) {
  const stefan::Config cfg;
  const PointCloud unit = seed_cloud(Circle{1.0, {0.0, 0.0}}, 0.02);
  EXPECT_LE(stefan::boundary_cost(unit, unit.positions, cfg), 1e-20);
  const double r = 1.2;
  const PointCloud c = seed_cloud(Circle{r, {0.0, 0.0}}, 0.02);
  const double expected = std::numbers::pi * r * std::pow(r * r - 1.0, 2.0 * cfg.alpha);
  EXPECT_NEAR(stefan::boundary_cost(c, c.positions, cfg), expected, 1e-3 * expected);
  stefan::Config alpha1 = cfg;
  alpha1.alpha = 1.0;
  const double expected1 = std::numbers::pi * r * std::pow(r * r - 1.0, 2.0);
  EXPECT_NEAR(stefan::boundary_cost(c, c.positions, alpha1), expected1, 1e-3 * expected1);
}

TEST(Gradient, ZeroMultipliersAndShape) {
  const stefan::Config cfg = short_run(0.05, 0.1);
  const stefan::Trajectory t = stefan::forward_solve(cfg, stefan::zero_control(cfg));
  stefan::Adjoint adj;
  for (std::size_t n = 1; n < t.levels.size(); ++n) {
    adj.lambda_theta.emplace_back(t.levels[n].cloud.size(), 0.0);
    adj.lambda_clouds.push_back(&t.levels[n].cloud);
  }
  const ControlVector g = stefan::gradient(adj, cfg);
  EXPECT_EQ(g.slices, cfg.grid().n_steps);
  EXPECT_EQ(g.width, 36);
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Adjoint, TerminalMultiplierComesFromCostOnly) {
  // static trajectory: the backward sweep visits the stored levels from last to first
  const stefan::Config cfg = short_run(0.05, 0.1);
  const ControlVector c = stefan::zero_control(cfg);
  const stefan::Trajectory t = stefan::forward_solve(cfg, c);
  const stefan::Adjoint adj = stefan::adjoint_solve(t, c, cfg);
  ASSERT_EQ(adj.lambda_theta.size(), static_cast<std::size_t>(cfg.grid().n_steps));
  ASSERT_FALSE(adj.visited.empty());
  EXPECT_EQ(adj.visited.front(), &t.levels.back().cloud);
  EXPECT_EQ(adj.dcost.slices, cfg.grid().n_steps);
}

TEST(Adjoint, MatchesFiniteDifferences) {
  stefan::Config cfg = short_run(0.1, 0.06);
  ControlVector c = stefan::zero_control(cfg);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (double& v : c.values) v = u(rng);
  const verify::GradCheckReport r = verify::fd_gradient_check(stefan::make_problem(cfg), c, {});
  EXPECT_EQ(r.directions(), 5);
  EXPECT_LE(r.worst_relerr(), 0.05);
}

TEST(Adjoint, IdentifiedSchemeRuns) {
  stefan::Config cfg = short_run(0.05, 0.1);
  ControlVector c = stefan::zero_control(cfg);
  for (double& v : c.values) v = 10.0;
  AdjointOptions o;
  o.scheme = AdjointScheme::identified;
  const stefan::Trajectory t = stefan::forward_solve(cfg, c);
  const stefan::Adjoint adj = stefan::adjoint_solve(t, c, cfg, o);
  EXPECT_EQ(adj.scheme, AdjointScheme::identified);
  double s = 0.0;
  for (double v : adj.dcost.values) s += std::abs(v);
  EXPECT_TRUE(std::isfinite(s));
  EXPECT_GT(s, 0.0);
}
