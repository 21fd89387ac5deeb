#include "fbopt/stefan.hpp"

#include <cmath>

#include "fbopt/errors.hpp"

namespace fbopt::stefan {

namespace {

Field component(std::span<const Vec2> v, int d) {
  Field out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = d == 0 ? v[i].x : v[i].y;
  return out;
}

VectorField combine(std::span<const double> x, std::span<const double> y) {
  VectorField out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = {x[i], y[i]};
  return out;
}

double bump(Vec2 x, Vec2 centre, double decay) { return std::exp(-decay * norm2(x - centre)); }

/// Positions of the ring at `positions`, arclength weights.
Field arclengths(const PointCloud& cloud, std::span<const Vec2> positions) {
  Field w(cloud.size(), 0.0);
  const std::size_t m = cloud.ring.size();
  for (std::size_t k = 0; k < m; ++k) {
    const int i = cloud.ring[k];
    const Vec2 p = positions[cloud.ring[(k + m - 1) % m]];
    const Vec2 q = positions[cloud.ring[(k + 1) % m]];
    w[i] = 0.5 * (norm(positions[i] - p) + norm(q - positions[i]));
  }
  return w;
}

double residual(Vec2 x, const Config& cfg) { return x.x * x.x / (cfg.a * cfg.a) + x.y * x.y / (cfg.b * cfg.b) - 1.0; }

Vec2 e_times(Vec2 x, const Config& cfg) { return {x.x / (cfg.a * cfg.a), x.y / (cfg.b * cfg.b)}; }

std::vector<BoundaryCondition> robin(const PointCloud& cloud, const Config& cfg) {
  return uniform_bc(cloud, {1.0, cfg.kappa});
}

/// Adds the sensitivities of the velocity solve on `level` for the velocity adjoint `ubar`.
void velocity_vjp(const Level& level, const VectorField& ubar, const Config& cfg, bool positions, VectorField& xbar,
                  Field& thbar) {
  const PointCloud& cloud = level.cloud;
  const auto bc = robin(cloud, cfg);
  const LinearSolver solver(assemble_operator(level.stencils, cloud, 0.0, 1.0, bc));
  const Field mux = to_field(solver.solve_transpose(to_eigen(component(ubar, 0))));
  const Field muy = to_field(solver.solve_transpose(to_eigen(component(ubar, 1))));
  const double k = cfg.beta / cfg.kappa;
  VectorField nbar(cloud.size());
  for (int i : cloud.ring) {
    const Vec2 n = cloud.normals[i];
    thbar[i] -= k * (mux[i] * n.x + muy[i] * n.y);
    nbar[i] += (k * (cfg.theta_m - level.theta[i])) * Vec2{mux[i], muy[i]};
  }
  if (!positions) return;
  const StencilFits fits(cloud, level.stencils);
  operator_vjp(cloud, fits, 1.0, bc, component(level.u, 0), mux, xbar, nbar);
  operator_vjp(cloud, fits, 1.0, bc, component(level.u, 1), muy, xbar, nbar);
  normals_vjp(cloud, nbar, xbar);
}

}  // namespace

std::vector<Vec2> Config::chi_centers() const {
  std::vector<Vec2> out;
  for (double y : chi_grid)
    for (double x : chi_grid) out.push_back({x, y});
  return out;
}

void Config::validate() const {
  if (!(kappa > 0.0)) throw ConfigError("stefan.kappa must be > 0");
  if (!(alpha >= 1.0) || alpha != std::floor(alpha)) throw ConfigError("stefan.alpha must be an integer >= 1");
  if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("stefan.a and stefan.b must be > 0");
  if (!(chi_decay > 0.0)) throw ConfigError("stefan.chi_decay must be > 0");
  if (chi_grid.empty()) throw ConfigError("stefan.chi_grid must not be empty");
  if (!(initial_edge > 0.0)) throw ConfigError("stefan.initial_edge must be > 0");
  if (!(spacing > 0.0)) throw ConfigError("stefan.spacing must be > 0");
  (void)grid();
}

Field chi_eval(std::span<const Vec2> points, std::span<const double> coeffs, const Config& cfg) {
  const auto centres = cfg.chi_centers();
  if (coeffs.size() != centres.size()) {
    throw ShapeMismatchError("expected " + std::to_string(centres.size()) + " bump coefficients, got " +
                             std::to_string(coeffs.size()));
  }
  Field out(points.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t k = 0; k < centres.size(); ++k) {
      if (coeffs[k] != 0.0) out[i] += coeffs[k] * bump(points[i], centres[k], cfg.chi_decay);
    }
  }
  return out;
}

VectorField solve_velocity(std::span<const double> theta, const PointCloud& cloud, const StencilSet& s,
                           const Config& cfg) {
  const std::size_t n = cloud.size();
  Field gx(n, 0.0), gy(n, 0.0);
  const double k = cfg.beta / cfg.kappa;
  for (int i : cloud.ring) {
    const double g = k * (cfg.theta_m - theta[i]);
    gx[i] = g * cloud.normals[i].x;
    gy[i] = g * cloud.normals[i].y;
  }
  const LinearSolver solver(assemble_operator(s, cloud, 0.0, 1.0, robin(cloud, cfg)));
  return combine(to_field(solver.solve(to_eigen(gx))), to_field(solver.solve(to_eigen(gy))));
}

Level make_level(PointCloud cloud, Field theta, const Config& cfg) {
  Level level;
  level.stencils = build_stencils(cloud);
  level.u = solve_velocity(theta, cloud, level.stencils, cfg);
  level.cloud = std::move(cloud);
  level.theta = std::move(theta);
  return level;
}

Level initial_level(const Config& cfg) {
  PointCloud cloud = seed_cloud(Square{cfg.initial_edge, {0.0, 0.0}}, cfg.spacing);
  Field theta(cloud.size(), cfg.theta0);
  return make_level(std::move(cloud), std::move(theta), cfg);
}

std::pair<Step, Level> forward_step(const Level& level, std::span<const double> c_next, const Config& cfg) {
  Step step;
  step.transform = step_transform(level.cloud, level.u, cfg.tau);
  const VectorField grad = apply_gradient(level.stencils, level.theta);
  Field conv(level.cloud.size());
  for (std::size_t i = 0; i < conv.size(); ++i) conv[i] = dot(level.u[i], grad[i]);
  step.conv = push_forward_carry(conv, step.transform);
  const Field theta_carried = push_forward_carry(level.theta, step.transform);

  const PointCloud& moved = step.transform.moved;
  step.heat_stencils = build_stencils(moved);
  const Field source = chi_eval(moved.positions, c_next, cfg);
  const double inv_tau = 1.0 / cfg.tau;
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(moved.size()));
  for (std::size_t i = 0; i < moved.size(); ++i) {
    rhs[i] = moved.is_boundary(i) ? cfg.theta_m : inv_tau * theta_carried[i] + step.conv[i] + source[i];
  }
  const LinearSolver solver(assemble_operator(step.heat_stencils, moved, inv_tau, 1.0, robin(moved, cfg)));
  step.theta_hat = to_field(solver.solve(rhs));

  Managed managed = manage_points(moved);
  step.map = std::move(managed.map);
  Field theta_next = step.map.apply(step.theta_hat);
  Level next = make_level(std::move(managed.cloud), std::move(theta_next), cfg);
  return {std::move(step), std::move(next)};
}

ControlVector zero_control(const Config& cfg) {
  return ControlVector(cfg.grid().n_steps, static_cast<int>(cfg.chi_centers().size()), cfg.tau);
}

Trajectory forward_solve(const Config& cfg, const ControlVector& c) {
  cfg.validate();
  const TimeGrid grid = cfg.grid();
  if (c.slices != grid.n_steps || c.width != static_cast<int>(cfg.chi_centers().size())) {
    throw ShapeMismatchError("control must have " + std::to_string(grid.n_steps) + " slices of " +
                             std::to_string(cfg.chi_centers().size()) + " coefficients");
  }
  Trajectory traj;
  traj.levels.reserve(grid.n_steps + 1);
  traj.steps.reserve(grid.n_steps);
  traj.levels.push_back(initial_level(cfg));
  for (int n = 0; n < grid.n_steps; ++n) {
    auto [step, next] = forward_step(traj.levels.back(), c.slice(n + 1), cfg);
    traj.steps.push_back(std::move(step));
    traj.levels.push_back(std::move(next));
  }
  return traj;
}

VectorField final_boundary(const Trajectory& traj, const Config& cfg) {
  const Level& last = traj.levels.back();
  const VectorField u = mobility_projection(last.cloud, last.u);
  VectorField x(last.cloud.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = last.cloud.positions[i] + cfg.tau * u[i];
  return x;
}

double boundary_cost(const PointCloud& cloud, std::span<const Vec2> positions, const Config& cfg) {
  const Field w = arclengths(cloud, positions);
  const double power = 2.0 * cfg.alpha;
  double j = 0.0;
  for (int i : cloud.ring) j += 0.5 * w[i] * std::pow(residual(positions[i], cfg), power);
  return j;
}

double cost(const Trajectory& traj, const Config& cfg) {
  return boundary_cost(traj.levels.back().cloud, final_boundary(traj, cfg), cfg);
}

double ellipse_rms(const Trajectory& traj, const Config& cfg) {
  const PointCloud& cloud = traj.levels.back().cloud;
  double sum = 0.0;
  for (int i : cloud.ring) sum += std::pow(residual(cloud.positions[i], cfg), 2);
  return std::sqrt(sum / static_cast<double>(cloud.ring.size()));
}

// ---------------------------------------------------------------------------
// Adjoints

namespace {

Adjoint discrete_adjoint(const Trajectory& traj, const ControlVector& c, const Config& cfg, bool positions) {
  const int steps = static_cast<int>(traj.steps.size());
  Adjoint adj;
  adj.scheme = AdjointScheme::discrete;
  adj.dcost = ControlVector(c.slices, c.width, c.tau);
  adj.lambda_theta.resize(steps);
  adj.lambda_clouds.resize(steps);

  // Terminal cost through x + tau u on the last level.
  const Level& last = traj.levels.back();
  const std::size_t nl = last.cloud.size();
  const VectorField xt = final_boundary(traj, cfg);
  const Field w = arclengths(last.cloud, xt);
  const double power = 2.0 * cfg.alpha;
  VectorField xbar(nl);
  Field wbar(nl, 0.0);
  for (int i : last.cloud.ring) {
    const double r = residual(xt[i], cfg);
    xbar[i] += (power * w[i] * std::pow(r, power - 1.0)) * e_times(xt[i], cfg);
    wbar[i] = 0.5 * std::pow(r, power);
  }
  {
    PointCloud at_x = last.cloud;
    at_x.positions = xt;
    arclength_vjp(at_x, wbar, xbar);
  }
  VectorField ubar = mobility_projection(last.cloud, xbar);
  for (Vec2& v : ubar) v *= cfg.tau;
  Field thbar(nl, 0.0);
  if (!positions) std::fill(xbar.begin(), xbar.end(), Vec2{});
  velocity_vjp(last, ubar, cfg, positions, xbar, thbar);
  adj.visited.push_back(&last.cloud);

  const auto centres = cfg.chi_centers();
  for (int n = steps - 1; n >= 0; --n) {
    const Step& step = traj.steps[n];
    const Level& level = traj.levels[n];
    const PointCloud& moved = step.transform.moved;
    const std::size_t nm = moved.size();

    // Resampling back onto the moved cloud.
    const Field th_hat_bar = step.map.apply_transpose(thbar);
    VectorField xhat_bar(nm);
    if (positions) step.map.position_vjp(moved, xbar, step.theta_hat, thbar, xhat_bar);

    // Heat solve on the moved cloud.
    const auto bc = robin(moved, cfg);
    const LinearSolver heat(assemble_operator(step.heat_stencils, moved, 1.0 / cfg.tau, 1.0, bc));
    const Field mu = to_field(heat.solve_transpose(to_eigen(th_hat_bar)));
    std::span<double> cbar = adj.dcost.slice(n + 1);
    const std::span<const double> cn = c.slice(n + 1);
    Field conv_bar(nm, 0.0);
    Field theta_n_bar(nm, 0.0);
    Field density(nm, 0.0);
    for (std::size_t i = 0; i < nm; ++i) {
      if (moved.is_boundary(i)) continue;
      conv_bar[i] = mu[i];
      theta_n_bar[i] = mu[i] / cfg.tau;
      density[i] = -mu[i] / (cfg.tau * moved.weights[i]);
      Vec2 grad_src{};
      for (std::size_t k = 0; k < centres.size(); ++k) {
        const double b = bump(moved.positions[i], centres[k], cfg.chi_decay);
        cbar[k] += mu[i] * b;
        grad_src += (cn[k] * b * -2.0 * cfg.chi_decay) * (moved.positions[i] - centres[k]);
      }
      xhat_bar[i] += mu[i] * grad_src;
    }
    adj.lambda_theta[n] = std::move(density);
    adj.lambda_clouds[n] = &moved;
    if (positions) {
      VectorField nbar(nm);
      const StencilFits fits(moved, step.heat_stencils);
      operator_vjp(moved, fits, 1.0, bc, step.theta_hat, mu, xhat_bar, nbar);
      normals_vjp(moved, nbar, xhat_bar);
    }

    // Back onto level n: moved = x + tau P u, carried convection and temperature.
    const std::size_t nn = level.cloud.size();
    VectorField xb(nn);
    Field tb(nn, 0.0);
    VectorField ub(nn);
    const VectorField proj = mobility_projection(level.cloud, xhat_bar);
    const VectorField grad = apply_gradient(level.stencils, level.theta);
    VectorField gbar(nn);
    for (std::size_t i = 0; i < nn; ++i) {
      if (positions) xb[i] = xhat_bar[i];
      ub[i] = (positions ? cfg.tau : 0.0) * proj[i] + conv_bar[i] * grad[i];
      gbar[i] = conv_bar[i] * level.u[i];
      tb[i] = theta_n_bar[i];
    }
    const Field tg = gradient_transpose(level.stencils, gbar);
    for (std::size_t i = 0; i < nn; ++i) tb[i] += tg[i];
    if (positions) {
      const StencilFits fits(level.cloud, level.stencils);
      gradient_vjp(fits, level.theta, gbar, xb);
    }
    velocity_vjp(level, ub, cfg, positions, xb, tb);
    xbar = std::move(xb);
    thbar = std::move(tb);
    adj.visited.push_back(&level.cloud);
  }
  for (double& v : adj.dcost.values) v /= cfg.tau;
  return adj;
}

Adjoint identified_adjoint(const Trajectory& traj, const ControlVector& c, const Config& cfg) {
  const int steps = static_cast<int>(traj.steps.size());
  Adjoint adj;
  adj.scheme = AdjointScheme::identified;
  adj.dcost = ControlVector(c.slices, c.width, c.tau);
  adj.lambda_theta.resize(steps);
  adj.lambda_clouds.resize(steps);
  adj.lambda_u.resize(steps + 1);
  const double k = cfg.beta / cfg.kappa;

  // n = N
  const Level& last = traj.levels.back();
  {
    const PointCloud& cloud = last.cloud;
    const std::size_t n = cloud.size();
    const VectorField xt = final_boundary(traj, cfg);
    Field gx(n, 0.0), gy(n, 0.0);
    const double power = 2.0 * cfg.alpha;
    for (int i : cloud.ring) {
      const Vec2 g = (-power * cfg.kappa * std::pow(residual(xt[i], cfg), power - 1.0)) * e_times(xt[i], cfg);
      gx[i] = g.x;
      gy[i] = g.y;
    }
    const Field zero(n, 0.0);
    const Field lx = solve_robin_poisson(last.stencils, cloud, zero, cfg.kappa, gx);
    const Field ly = solve_robin_poisson(last.stencils, cloud, zero, cfg.kappa, gy);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (int i : cloud.ring) rhs[i] = -k * (lx[i] * cloud.normals[i].x + ly[i] * cloud.normals[i].y);
    const LinearSolver solver(assemble_operator(last.stencils, cloud, 1.0, cfg.tau, robin(cloud, cfg)));
    adj.lambda_theta[steps - 1] = to_field(solver.solve(rhs));
    adj.lambda_clouds[steps - 1] = &cloud;
    adj.lambda_u[steps] = combine(lx, ly);
    adj.visited.push_back(&cloud);
  }
  // n = N-1 .. 1
  for (int n = steps - 1; n >= 1; --n) {
    const Level& level = traj.levels[n];
    const PointCloud& cloud = level.cloud;
    const std::size_t m = cloud.size();
    const Level& next = traj.levels[n + 1];
    VectorField images(m);
    for (std::size_t i = 0; i < m; ++i) images[i] = traj.steps[n].transform.moved.positions[i];
    const Field pulled = interpolate(next.cloud, adj.lambda_theta[n], images);
    const VectorField grad_theta = apply_gradient(level.stencils, level.theta);
    const VectorField grad_pulled = apply_gradient(level.stencils, pulled);
    Field rx(m, 0.0), ry(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      rx[i] = pulled[i] * grad_theta[i].x;
      ry[i] = pulled[i] * grad_theta[i].y;
    }
    const Field zero(m, 0.0);
    const Field lx = solve_robin_poisson(level.stencils, cloud, rx, cfg.kappa, zero);
    const Field ly = solve_robin_poisson(level.stencils, cloud, ry, cfg.kappa, zero);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      if (cloud.is_boundary(i)) {
        const Vec2 nv = cloud.normals[i];
        rhs[i] = cfg.kappa * pulled[i] * dot(level.u[i], nv) - k * (lx[i] * nv.x + ly[i] * nv.y);
      } else {
        rhs[i] = pulled[i] / cfg.tau - dot(level.u[i], grad_pulled[i]);
      }
    }
    const LinearSolver solver(assemble_operator(level.stencils, cloud, 1.0 / cfg.tau, 1.0, robin(cloud, cfg)));
    adj.lambda_theta[n - 1] = to_field(solver.solve(rhs));
    adj.lambda_clouds[n - 1] = &cloud;
    adj.lambda_u[n] = combine(lx, ly);
    adj.visited.push_back(&cloud);
  }
  adj.dcost = gradient(adj, cfg);
  return adj;
}

}  // namespace

Adjoint adjoint_solve(const Trajectory& traj, const ControlVector& c, const Config& cfg, AdjointOptions options) {
  if (traj.steps.empty()) throw ShapeMismatchError("trajectory has no steps");
  if (options.scheme == AdjointScheme::identified) return identified_adjoint(traj, c, cfg);
  return discrete_adjoint(traj, c, cfg, options.domain_variation);
}

ControlVector gradient(const Adjoint& adj, const Config& cfg) {
  const auto centres = cfg.chi_centers();
  const int slices = static_cast<int>(adj.lambda_theta.size());
  ControlVector g(slices, static_cast<int>(centres.size()), cfg.tau);
  for (int n = 1; n <= slices; ++n) {
    const PointCloud& cloud = *adj.lambda_clouds[n - 1];
    const Field& lam = adj.lambda_theta[n - 1];
    std::span<double> gn = g.slice(n);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (cloud.is_boundary(i) || lam[i] == 0.0) continue;
      for (std::size_t k = 0; k < centres.size(); ++k) {
        gn[k] -= cloud.weights[i] * bump(cloud.positions[i], centres[k], cfg.chi_decay) * lam[i];
      }
    }
  }
  return g;
}

Problem make_problem(const Config& cfg, AdjointOptions options) {
  struct Cache {
    std::vector<double> control;
    double cost = 0.0;
    std::shared_ptr<Trajectory> traj;
  };
  auto cache = std::make_shared<Cache>();
  auto evaluate = [cfg, cache](const ControlVector& c) {
    if (!cache->traj || cache->control != c.values) {
      cache->traj.reset();
      auto traj = std::make_shared<Trajectory>(forward_solve(cfg, c));
      cache->cost = cost(*traj, cfg);
      cache->traj = std::move(traj);
      cache->control = c.values;
    }
    return cache->cost;
  };
  Problem p;
  p.value = evaluate;
  p.value_and_gradient = [cfg, cache, evaluate, options](const ControlVector& c) {
    const double j = evaluate(c);
    Adjoint adj = adjoint_solve(*cache->traj, c, cfg, options);
    if (options.scheme == AdjointScheme::identified) return std::make_pair(j, gradient(adj, cfg));
    return std::make_pair(j, std::move(adj.dcost));
  };
  return p;
}

}  // namespace fbopt::stefan
