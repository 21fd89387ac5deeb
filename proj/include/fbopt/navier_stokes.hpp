#pragma once

#include <span>
#include <vector>

#include "fbopt/adjoint.hpp"
#include "fbopt/geometry.hpp"
#include "fbopt/manage.hpp"
#include "fbopt/meshless.hpp"
#include "fbopt/optim.hpp"
#include "fbopt/transport.hpp"

namespace fbopt::navier_stokes {

struct Config {
  double nu = 10.0;
  double sigma = 0.005;
  double u_max = 3.0;
  double tau = 0.005;
  double t_final = 2.5;
  double spacing = 0.25;
  Tank tank{};

  TimeGrid grid() const { return make_time_grid(t_final, tau); }
  void validate() const;
};

/// Tank cloud with mobilities: free-surface corners slide vertically, walls, inflow and
/// outflow points are fixed.
PointCloud tank_cloud(const Config& cfg);

/// Inflow points ordered by height; the control slice holds one value per entry.
std::vector<int> inflow_points(const PointCloud& cloud);

/// Outflow velocity u_max 4 s (1 - s) along the outward normal of the right wall.
Vec2 outflow_profile(Vec2 x, const Config& cfg);

struct Level {
  PointCloud cloud;
  StencilSet stencils;
  VectorField u_tilde;  // momentum solution before projection
  Field p;
  VectorField u;
};

struct Step {
  StepTransform transform;  // base = level n, moved = level n cloud advanced by tau u
  ResampleMap map;          // moved cloud -> level n+1 cloud
  VectorField carried;      // u^n on the level n+1 cloud
};

struct Trajectory {
  std::vector<Level> levels;  // n = 0..N
  std::vector<Step> steps;    // n = 0..N-1
};

Level initial_level(const Config& cfg);
std::pair<Step, Level> forward_step(const Level& level, std::span<const double> c_next, const Config& cfg);
Trajectory forward_solve(const Config& cfg, const ControlVector& c);
ControlVector zero_control(const Config& cfg);

/// 1/2 sum_{n=1}^{N-1} tau sum_{free surface} w |u^n|^2
double cost(const Trajectory& traj, const Config& cfg);
/// tau-weighted time average of the mean speed on the free surface over n = 1..N-1.
double mean_surface_speed(const Trajectory& traj, const Config& cfg);

/// Boundary conditions of the momentum and pressure solves on `cloud`.
std::vector<BoundaryCondition> momentum_bc(const PointCloud& cloud);
std::vector<BoundaryCondition> pressure_bc(const PointCloud& cloud);

struct Adjoint {
  AdjointScheme scheme = AdjointScheme::discrete;
  /// lambda_p^n and lambda_u^n for n = 0..N on the level clouds.
  std::vector<Field> lambda_p;
  std::vector<VectorField> lambda_u;
  std::vector<const PointCloud*> visited;
  ControlVector dcost;
};

Adjoint adjoint_solve(const Trajectory& traj, const ControlVector& c, const Config& cfg, AdjointOptions options = {});

/// g^n = -sigma lambda_p^n on the inflow points, n = 1..N.
ControlVector gradient(const Adjoint& adj, const Trajectory& traj, const Config& cfg);

Problem make_problem(const Config& cfg, AdjointOptions options = {});

}  // namespace fbopt::navier_stokes
