#include "fbopt/navier_stokes.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "fbopt/errors.hpp"

namespace fbopt::navier_stokes {

namespace {

using namespace tank_segment;

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

bool dirichlet_velocity(int kind) { return kind == wall || kind == outflow; }

void check_control(const Config& cfg, const ControlVector& c, std::size_t inflow) {
  const int n = cfg.grid().n_steps;
  if (c.slices != n || c.width != static_cast<int>(inflow)) {
    throw ShapeMismatchError("control must have " + std::to_string(n) + " slices of " + std::to_string(inflow) +
                             " inflow values");
  }
}

}  // namespace

void Config::validate() const {
  if (!(nu > 0.0)) throw ConfigError("navier_stokes.nu must be > 0");
  if (!(sigma > 0.0)) throw ConfigError("navier_stokes.sigma must be > 0");
  if (!(spacing > 0.0)) throw ConfigError("navier_stokes.spacing must be > 0");
  (void)grid();
}

PointCloud tank_cloud(const Config& cfg) {
  PointCloud cloud = seed_cloud(cfg.tank, cfg.spacing);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.is_boundary(i)) continue;
    if (cloud.kind[i] == free) {
      const double x = cloud.positions[i].x;
      if (x == 0.0 || x == cfg.tank.width) {
        cloud.mobility[i] = Mobility::slide;
        cloud.slide_dir[i] = {0.0, 1.0};
      }
    } else {
      cloud.mobility[i] = Mobility::fixed;
    }
  }
  return cloud;
}

std::vector<int> inflow_points(const PointCloud& cloud) {
  std::vector<int> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.kind[i] == inflow) out.push_back(static_cast<int>(i));
  }
  std::stable_sort(out.begin(), out.end(),
                   [&](int a, int b) { return cloud.positions[a].y < cloud.positions[b].y; });
  return out;
}

Vec2 outflow_profile(Vec2 x, const Config& cfg) {
  const double s = std::clamp((x.y - cfg.tank.outflow_lo) / (cfg.tank.outflow_hi - cfg.tank.outflow_lo), 0.0, 1.0);
  return {cfg.u_max * 4.0 * s * (1.0 - s), 0.0};
}

std::vector<BoundaryCondition> momentum_bc(const PointCloud& cloud) {
  std::vector<BoundaryCondition> bc(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.is_boundary(i)) bc[i] = dirichlet_velocity(cloud.kind[i]) ? BoundaryCondition{1.0, 0.0} : BoundaryCondition{0.0, 1.0};
  }
  return bc;
}

std::vector<BoundaryCondition> pressure_bc(const PointCloud& cloud) {
  std::vector<BoundaryCondition> bc(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.is_boundary(i)) bc[i] = cloud.kind[i] == free ? BoundaryCondition{1.0, 0.0} : BoundaryCondition{0.0, 1.0};
  }
  return bc;
}

Level initial_level(const Config& cfg) {
  Level level;
  level.cloud = tank_cloud(cfg);
  level.stencils = build_stencils(level.cloud);
  level.u_tilde.assign(level.cloud.size(), Vec2{});
  level.p.assign(level.cloud.size(), 0.0);
  level.u.assign(level.cloud.size(), Vec2{});
  return level;
}

std::pair<Step, Level> forward_step(const Level& level, std::span<const double> c_next, const Config& cfg) {
  Step step;
  step.transform = step_transform(level.cloud, level.u, cfg.tau);
  Managed managed = manage_points(step.transform.moved);
  step.map = std::move(managed.map);
  step.carried = step.map.apply(push_forward_carry(level.u, step.transform));

  Level next;
  next.cloud = std::move(managed.cloud);
  const PointCloud& cloud = next.cloud;
  next.stencils = build_stencils(cloud);
  const std::size_t n = cloud.size();
  const std::vector<int> inflow_ids = inflow_points(cloud);
  if (inflow_ids.size() != c_next.size()) throw ShapeMismatchError("control slice does not match inflow points");

  // Momentum.
  const double inv_tau = 1.0 / cfg.tau;
  Eigen::VectorXd bx(static_cast<Eigen::Index>(n)), by(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!cloud.is_boundary(i)) {
      bx[i] = inv_tau * step.carried[i].x;
      by[i] = inv_tau * step.carried[i].y;
    } else if (cloud.kind[i] == outflow) {
      const Vec2 v = outflow_profile(cloud.positions[i], cfg);
      bx[i] = v.x;
      by[i] = v.y;
    } else {
      bx[i] = by[i] = 0.0;
    }
  }
  const LinearSolver momentum(assemble_operator(next.stencils, cloud, inv_tau, cfg.nu, momentum_bc(cloud)));
  next.u_tilde = combine(to_field(momentum.solve(bx)), to_field(momentum.solve(by)));

  // Pressure projection.
  const Field div = apply_divergence(next.stencils, next.u_tilde);
  Eigen::VectorXd bp = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!cloud.is_boundary(i)) bp[i] = -div[i] / cfg.sigma;
  }
  for (std::size_t k = 0; k < inflow_ids.size(); ++k) bp[inflow_ids[k]] = c_next[k];
  const LinearSolver pressure(assemble_operator(next.stencils, cloud, 0.0, 1.0, pressure_bc(cloud)));
  next.p = to_field(pressure.solve(bp));
  const VectorField gp = apply_gradient(next.stencils, next.p);
  next.u.resize(n);
  for (std::size_t i = 0; i < n; ++i) next.u[i] = next.u_tilde[i] - cfg.sigma * gp[i];
  return {std::move(step), std::move(next)};
}

ControlVector zero_control(const Config& cfg) {
  const PointCloud cloud = tank_cloud(cfg);
  return ControlVector(cfg.grid().n_steps, static_cast<int>(inflow_points(cloud).size()), cfg.tau);
}

Trajectory forward_solve(const Config& cfg, const ControlVector& c) {
  cfg.validate();
  Trajectory traj;
  traj.levels.push_back(initial_level(cfg));
  check_control(cfg, c, inflow_points(traj.levels.front().cloud).size());
  const int steps = cfg.grid().n_steps;
  traj.levels.reserve(steps + 1);
  traj.steps.reserve(steps);
  for (int n = 0; n < steps; ++n) {
    auto [step, next] = forward_step(traj.levels.back(), c.slice(n + 1), cfg);
    traj.steps.push_back(std::move(step));
    traj.levels.push_back(std::move(next));
  }
  return traj;
}

double cost(const Trajectory& traj, const Config& cfg) {
  double j = 0.0;
  const int steps = static_cast<int>(traj.steps.size());
  for (int n = 1; n <= steps - 1; ++n) {
    const Level& level = traj.levels[n];
    for (int i : level.cloud.ring) {
      if (level.cloud.kind[i] == free) j += 0.5 * cfg.tau * level.cloud.weights[i] * norm2(level.u[i]);
    }
  }
  return j;
}

double mean_surface_speed(const Trajectory& traj, const Config& cfg) {
  double sum = 0.0, time = 0.0;
  const int steps = static_cast<int>(traj.steps.size());
  for (int n = 1; n <= steps - 1; ++n) {
    const Level& level = traj.levels[n];
    double speed = 0.0, length = 0.0;
    for (int i : level.cloud.ring) {
      if (level.cloud.kind[i] != free) continue;
      speed += level.cloud.weights[i] * norm(level.u[i]);
      length += level.cloud.weights[i];
    }
    if (length > 0.0) {
      sum += cfg.tau * speed / length;
      time += cfg.tau;
    }
  }
  return time > 0.0 ? sum / time : 0.0;
}

// ---------------------------------------------------------------------------
// Adjoints

namespace {

Adjoint discrete_adjoint(const Trajectory& traj, const ControlVector& c, const Config& cfg, bool positions) {
  const int steps = static_cast<int>(traj.steps.size());
  Adjoint adj;
  adj.scheme = AdjointScheme::discrete;
  adj.dcost = ControlVector(c.slices, c.width, c.tau);
  adj.lambda_p.resize(steps + 1);
  adj.lambda_u.resize(steps + 1);
  adj.lambda_p[steps].assign(traj.levels[steps].cloud.size(), 0.0);
  adj.lambda_u[steps].assign(traj.levels[steps].cloud.size(), Vec2{});

  VectorField ubar(traj.levels[steps].cloud.size());
  VectorField xbar(ubar.size());
  adj.visited.push_back(&traj.levels[steps].cloud);
  for (int n = steps - 1; n >= 0; --n) {
    const Level& next = traj.levels[n + 1];
    const Level& level = traj.levels[n];
    const Step& step = traj.steps[n];
    const PointCloud& cloud = next.cloud;
    const std::size_t m = cloud.size();

    // Cost at level n+1.
    if (n + 1 >= 1 && n + 1 <= steps - 1) {
      Field wbar(m, 0.0);
      for (int i : cloud.ring) {
        if (cloud.kind[i] != free) continue;
        ubar[i] += (cfg.tau * cloud.weights[i]) * next.u[i];
        wbar[i] = 0.5 * cfg.tau * norm2(next.u[i]);
      }
      if (positions) arclength_vjp(cloud, wbar, xbar);
    }

    std::unique_ptr<StencilFits> fits;
    if (positions) fits = std::make_unique<StencilFits>(cloud, next.stencils);
    VectorField nbar(m);

    // Correction u = u_tilde - sigma grad p.
    VectorField gbar(m);
    for (std::size_t i = 0; i < m; ++i) gbar[i] = -cfg.sigma * ubar[i];
    const Field pbar = gradient_transpose(next.stencils, gbar);
    if (positions) gradient_vjp(*fits, next.p, gbar, xbar);
    VectorField utbar = ubar;

    // Pressure solve.
    const auto pbc = pressure_bc(cloud);
    const LinearSolver pressure(assemble_operator(next.stencils, cloud, 0.0, 1.0, pbc));
    const Field mup = to_field(pressure.solve_transpose(to_eigen(pbar)));
    Field dbar(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      if (!cloud.is_boundary(i)) dbar[i] = -mup[i] / cfg.sigma;
    }
    const VectorField dt = divergence_transpose(next.stencils, dbar);
    for (std::size_t i = 0; i < m; ++i) utbar[i] += dt[i];
    if (positions) {
      divergence_vjp(*fits, next.u_tilde, dbar, xbar);
      operator_vjp(cloud, *fits, 1.0, pbc, next.p, mup, xbar, nbar);
    }
    const std::vector<int> inflow_ids = inflow_points(cloud);
    std::span<double> cbar = adj.dcost.slice(n + 1);
    for (std::size_t k = 0; k < inflow_ids.size(); ++k) cbar[k] = mup[inflow_ids[k]] / cfg.tau;
    Field lam_p(m);
    for (std::size_t i = 0; i < m; ++i) lam_p[i] = -mup[i] / (cfg.sigma * cfg.tau);
    adj.lambda_p[n + 1] = std::move(lam_p);

    // Momentum solve.
    const auto mbc = momentum_bc(cloud);
    const LinearSolver momentum(assemble_operator(next.stencils, cloud, 1.0 / cfg.tau, cfg.nu, mbc));
    const Field mux = to_field(momentum.solve_transpose(to_eigen(component(utbar, 0))));
    const Field muy = to_field(momentum.solve_transpose(to_eigen(component(utbar, 1))));
    VectorField carried_bar(m);
    for (std::size_t i = 0; i < m; ++i) {
      if (!cloud.is_boundary(i)) carried_bar[i] = (1.0 / cfg.tau) * Vec2{mux[i], muy[i]};
    }
    adj.lambda_u[n + 1] = combine(mux, muy);
    if (positions) {
      operator_vjp(cloud, *fits, cfg.nu, mbc, component(next.u_tilde, 0), mux, xbar, nbar);
      operator_vjp(cloud, *fits, cfg.nu, mbc, component(next.u_tilde, 1), muy, xbar, nbar);
      normals_vjp(cloud, nbar, xbar);
    }

    // Resampling and the step map back to level n.
    const PointCloud& moved = step.transform.moved;
    VectorField u_prev = step.map.apply_transpose(carried_bar);
    VectorField xhat_bar(moved.size());
    if (positions) {
      step.map.position_vjp(moved, xbar, std::span<const Vec2>(level.u), std::span<const Vec2>(carried_bar),
                            xhat_bar);
      const VectorField proj = mobility_projection(level.cloud, xhat_bar);
      for (std::size_t i = 0; i < u_prev.size(); ++i) u_prev[i] += cfg.tau * proj[i];
    }
    ubar = std::move(u_prev);
    xbar = std::move(xhat_bar);
    adj.visited.push_back(&level.cloud);
  }
  adj.lambda_p[0].assign(traj.levels[0].cloud.size(), 0.0);
  adj.lambda_u[0] = ubar;
  return adj;
}

Adjoint identified_adjoint(const Trajectory& traj, const ControlVector& c, const Config& cfg) {
  const int steps = static_cast<int>(traj.steps.size());
  Adjoint adj;
  adj.scheme = AdjointScheme::identified;
  adj.lambda_p.resize(steps + 1);
  adj.lambda_u.resize(steps + 1);
  adj.lambda_u[steps].assign(traj.levels[steps].cloud.size(), Vec2{});
  adj.lambda_p[steps].assign(traj.levels[steps].cloud.size(), 0.0);
  adj.visited.push_back(&traj.levels[steps].cloud);
  for (int n = steps - 1; n >= 1; --n) {
    const Level& level = traj.levels[n];
    const PointCloud& cloud = level.cloud;
    const StencilSet& s = level.stencils;
    const std::size_t m = cloud.size();
    const auto N = static_cast<int>(m);
    const Level& next = traj.levels[n + 1];
    const VectorField& images = traj.steps[n].transform.moved.positions;
    const Field px = interpolate(next.cloud, component(adj.lambda_u[n + 1], 0), images);
    const Field py = interpolate(next.cloud, component(adj.lambda_u[n + 1], 1), images);
    const VectorField gux = apply_gradient(s, component(level.u, 0));
    const VectorField guy = apply_gradient(s, component(level.u, 1));

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(3 * N);
    auto add_row = [&](int row, int block, std::size_t i, const std::vector<double>& w, double scale) {
      for (int k = s.start[i]; k < s.start[i + 1]; ++k) trip.emplace_back(row, block * N + s.nbr[k], scale * w[k - s.start[i]]);
    };
    for (std::size_t i = 0; i < m; ++i) {
      const int ii = static_cast<int>(i);
      const int deg = s.start[i + 1] - s.start[i];
      std::vector<double> wl(deg), wx(deg), wy(deg), wn(deg);
      const Vec2 nv = cloud.normals[i];
      for (int k = 0; k < deg; ++k) {
        const int at = s.start[i] + k;
        wl[k] = s.lap[at];
        wx[k] = s.dx[at];
        wy[k] = s.dy[at];
        wn[k] = nv.x * s.ndx[at] + nv.y * s.ndy[at];
      }
      const Vec2 pull{px[i], py[i]};
      if (!cloud.is_boundary(i)) {
        trip.emplace_back(ii, ii, 1.0 / cfg.tau);
        add_row(ii, 0, i, wl, -cfg.nu);
        add_row(ii, 2, i, wx, -1.0);
        rhs[ii] = pull.x / cfg.tau - (pull.x * gux[i].x + pull.y * guy[i].x);
        trip.emplace_back(N + ii, N + ii, 1.0 / cfg.tau);
        add_row(N + ii, 1, i, wl, -cfg.nu);
        add_row(N + ii, 2, i, wy, -1.0);
        rhs[N + ii] = pull.y / cfg.tau - (pull.x * gux[i].y + pull.y * guy[i].y);
        trip.emplace_back(2 * N + ii, 2 * N + ii, 0.0);
        add_row(2 * N + ii, 2, i, wl, -cfg.sigma);
        add_row(2 * N + ii, 0, i, wx, -1.0);
        add_row(2 * N + ii, 1, i, wy, -1.0);
        continue;
      }
      const int kind = cloud.kind[i];
      const double up = dot(level.u[i], pull);
      if (dirichlet_velocity(kind)) {
        trip.emplace_back(ii, ii, 1.0);
        trip.emplace_back(N + ii, N + ii, 1.0);
        trip.emplace_back(2 * N + ii, 2 * N + ii, 0.0);
        add_row(2 * N + ii, 2, i, wn, cfg.sigma);
        continue;
      }
      trip.emplace_back(ii, ii, 0.0);
      trip.emplace_back(N + ii, N + ii, 0.0);
      add_row(ii, 0, i, wn, cfg.nu);
      add_row(N + ii, 1, i, wn, cfg.nu);
      if (kind == free) {
        rhs[ii] = -level.u[i].x - up * nv.x;
        rhs[N + ii] = -level.u[i].y - up * nv.y;
        trip.emplace_back(2 * N + ii, 2 * N + ii, 1.0);
      } else {
        // Inflow.
        trip.emplace_back(ii, 2 * N + ii, nv.x);
        trip.emplace_back(N + ii, 2 * N + ii, nv.y);
        rhs[ii] = -up * nv.x;
        rhs[N + ii] = -up * nv.y;
        trip.emplace_back(2 * N + ii, 2 * N + ii, 0.0);
        add_row(2 * N + ii, 2, i, wn, cfg.sigma);
        trip.emplace_back(2 * N + ii, ii, nv.x);
        trip.emplace_back(2 * N + ii, N + ii, nv.y);
      }
    }
    SparseMatrix a(3 * N, 3 * N);
    a.setFromTriplets(trip.begin(), trip.end());
    const Eigen::VectorXd sol = LinearSolver(a).solve(rhs);
    adj.lambda_u[n] = combine(Field(sol.data(), sol.data() + N), Field(sol.data() + N, sol.data() + 2 * N));
    adj.lambda_p[n] = Field(sol.data() + 2 * N, sol.data() + 3 * N);
    adj.visited.push_back(&cloud);
  }
  adj.lambda_u[0].assign(traj.levels[0].cloud.size(), Vec2{});
  adj.lambda_p[0].assign(traj.levels[0].cloud.size(), 0.0);
  adj.dcost = gradient(adj, traj, cfg);
  (void)c;
  return adj;
}

}  // namespace

Adjoint adjoint_solve(const Trajectory& traj, const ControlVector& c, const Config& cfg, AdjointOptions options) {
  if (traj.steps.empty()) throw ShapeMismatchError("trajectory has no steps");
  if (options.scheme == AdjointScheme::identified) return identified_adjoint(traj, c, cfg);
  return discrete_adjoint(traj, c, cfg, options.domain_variation);
}

ControlVector gradient(const Adjoint& adj, const Trajectory& traj, const Config& cfg) {
  const int steps = static_cast<int>(traj.steps.size());
  const std::vector<int> first = inflow_points(traj.levels[0].cloud);
  ControlVector g(steps, static_cast<int>(first.size()), cfg.tau);
  for (int n = 1; n <= steps; ++n) {
    const std::vector<int> ids = inflow_points(traj.levels[n].cloud);
    std::span<double> gn = g.slice(n);
    for (std::size_t k = 0; k < ids.size() && k < gn.size(); ++k) gn[k] = -cfg.sigma * adj.lambda_p[n][ids[k]];
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
    return std::make_pair(j, std::move(adj.dcost));
  };
  return p;
}

}  // namespace fbopt::navier_stokes
