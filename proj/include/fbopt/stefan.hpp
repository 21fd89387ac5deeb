#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fbopt/adjoint.hpp"
#include "fbopt/geometry.hpp"
#include "fbopt/manage.hpp"
#include "fbopt/meshless.hpp"
#include "fbopt/optim.hpp"
#include "fbopt/transport.hpp"

namespace fbopt {

namespace stefan {

struct Config {
  double alpha = 2.0;
  double beta = -1.0;
  double kappa = 0.01;
  double theta_m = 0.0;
  double a = 1.0;
  double b = 1.0;
  double tau = 0.01;
  double t_final = 0.3;
  double chi_decay = 25.0;
  std::vector<double> chi_grid{-1.0, -0.6, -0.2, 0.2, 0.6, 1.0};
  double initial_edge = 0.6;
  double spacing = 0.05;
  double theta0 = 0.0;

  TimeGrid grid() const { return make_time_grid(t_final, tau); }
  std::vector<Vec2> chi_centers() const;
  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// sum_k coeffs_k exp(-decay |x - x_k|^2)
Field chi_eval(std::span<const Vec2> points, std::span<const double> coeffs, const Config& cfg);

/// Robin-harmonic extension of the boundary velocity (beta/kappa)(theta_m - theta) n.
VectorField solve_velocity(std::span<const double> theta, const PointCloud& cloud, const StencilSet& s,
                           const Config& cfg);

/// One time level: the cloud, its stencils, the temperature and the velocity solved on it.
struct Level {
  PointCloud cloud;
  StencilSet stencils;
  Field theta;
  VectorField u;
};

/// Data of the step from level n to level n+1.
struct Step {
  StepTransform transform;  // base = level n cloud, moved = heat cloud
  StencilSet heat_stencils;
  Field conv;               // u^n . grad theta^n carried to the moved points
  Field theta_hat;          // heat solution on the moved cloud
  ResampleMap map;          // moved cloud -> level n+1 cloud
};

struct Trajectory {
  std::vector<Level> levels;  // n = 0..N
  std::vector<Step> steps;    // n = 0..N-1
};

Level make_level(PointCloud cloud, Field theta, const Config& cfg);
Level initial_level(const Config& cfg);

/// Advances one step with control slice `c_next` (one coefficient per bump).
std::pair<Step, Level> forward_step(const Level& level, std::span<const double> c_next, const Config& cfg);
Trajectory forward_solve(const Config& cfg, const ControlVector& c);

ControlVector zero_control(const Config& cfg);

/// Boundary positions the cost looks at: x + tau u^N on the final ring.
VectorField final_boundary(const Trajectory& traj, const Config& cfg);
double cost(const Trajectory& traj, const Config& cfg);
/// 1/2 sum_b w_b (x_b^T E x_b - 1)^(2 alpha) over the ring of `cloud` placed at `positions`.
double boundary_cost(const PointCloud& cloud, std::span<const Vec2> positions, const Config& cfg);
/// Root mean square of |x^2 + y^2 - 1| (scaled by the target axes) over the final boundary.
double ellipse_rms(const Trajectory& traj, const Config& cfg);

struct Adjoint {
  AdjointScheme scheme = AdjointScheme::discrete;
  /// lambda_theta^n for n = 1..N (index n-1), living on `lambda_clouds[n-1]`.
  std::vector<Field> lambda_theta;
  std::vector<const PointCloud*> lambda_clouds;
  /// lambda_u^n for n = 0..N where the scheme defines it (identified scheme).
  std::vector<VectorField> lambda_u;
  /// Forward levels visited by the backward sweep, in visiting order.
  std::vector<const PointCloud*> visited;
  /// Gradient of the cost in the control inner product.
  ControlVector dcost;
};

Adjoint adjoint_solve(const Trajectory& traj, const ControlVector& c, const Config& cfg, AdjointOptions options = {});

/// g^n_k = -sum_interior w_i chi_k(x_i) lambda_theta^n_i on the multiplier clouds.
ControlVector gradient(const Adjoint& adj, const Config& cfg);

/// Cached objective/gradient for the optimiser.
Problem make_problem(const Config& cfg, AdjointOptions options = {});

}  // namespace stefan
}  // namespace fbopt
