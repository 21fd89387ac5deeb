#include "fbopt/run.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "fbopt/errors.hpp"

namespace fbopt {

namespace fs = std::filesystem;

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string() + " (check run.output)");
  return out;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

template <class Write>
void write_snapshots(const fs::path& dir, int levels, int stride, Write write) {
  fs::create_directories(dir / "snapshots");
  for (int n = 0; n < levels; ++n) {
    if (n % stride != 0 && n != levels - 1) continue;
    char name[32];
    std::snprintf(name, sizeof name, "snapshot_%04d.csv", n);
    std::ofstream out = open_output(dir / "snapshots" / name);
    write(out, n);
  }
}

std::vector<double> component(const VectorField& v, bool y) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = y ? v[i].y : v[i].x;
  return out;
}

void snapshots(const fs::path& dir, const stefan::Trajectory& traj, const stefan::Config& cfg, int stride) {
  write_snapshots(dir, static_cast<int>(traj.levels.size()), stride, [&](std::ostream& out, int n) {
    const stefan::Level& l = traj.levels[n];
    const auto ux = component(l.u, false);
    const auto uy = component(l.u, true);
    const SnapshotColumn cols[] = {{"theta", l.theta}, {"ux", ux}, {"uy", uy}};
    write_snapshot(out, l.cloud, n, n * cfg.tau, cols);
  });
}

void snapshots(const fs::path& dir, const navier_stokes::Trajectory& traj, const navier_stokes::Config& cfg,
               int stride) {
  write_snapshots(dir, static_cast<int>(traj.levels.size()), stride, [&](std::ostream& out, int n) {
    const navier_stokes::Level& l = traj.levels[n];
    const auto ux = component(l.u, false);
    const auto uy = component(l.u, true);
    const SnapshotColumn cols[] = {{"p", l.p}, {"ux", ux}, {"uy", uy}};
    write_snapshot(out, l.cloud, n, n * cfg.tau, cols);
  });
}

void write_control(const fs::path& path, const ControlVector& c) {
  std::ofstream out = open_output(path);
  out << "n,index,value\n";
  for (int n = 1; n <= c.slices; ++n) {
    const auto s = c.slice(n);
    for (int k = 0; k < c.width; ++k) out << n << ',' << k << ',' << format_number(s[k]) << '\n';
  }
}

ControlVector constant_control(ControlVector c, double value) {
  for (double& v : c.values) v = value;
  return c;
}

// Shared driver for the two PDE problems. `Ops` supplies forward, cost, problem and extras.
template <class Ops>
RunSummary run_problem(const RunConfig& cfg, const Ops& ops) {
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  RunSummary s;
  ControlVector c = constant_control(ops.zero(), ops.control);

  if (cfg.command == "forward") {
    const auto traj = ops.forward(c);
    snapshots(dir, traj, ops.cfg, cfg.snapshot_stride);
    s.cost = ops.cost(traj);
    s.relgrad = nan;
    s.note = ops.describe(traj);
  } else if (cfg.command == "adjoint") {
    const auto traj = ops.forward(c);
    const auto adj = ops.adjoint(traj, c, cfg.adjoint);
    write_control(dir / "gradient.csv", adj.dcost);
    s.cost = ops.cost(traj);
    s.relgrad = 1.0;
    s.note = "gradnorm=" + short_number(control_norm(adj.dcost));
  } else if (cfg.command == "gradcheck") {
    if (cfg.gradcheck_perturb != 0.0) {
      std::mt19937_64 rng(cfg.gradcheck.seed + 1);
      std::uniform_real_distribution<double> u(-cfg.gradcheck_perturb, cfg.gradcheck_perturb);
      for (double& v : c.values) v += u(rng);
    }
    const Problem p = ops.problem(cfg.adjoint);
    const verify::GradCheckReport r = verify::fd_gradient_check(p, c, cfg.gradcheck);
    std::ofstream out = open_output(dir / "gradcheck.csv");
    verify::write_gradcheck(out, r);
    s.cost = p.value(c);
    s.relgrad = nan;
    s.note = "worst_relerr=" + short_number(r.worst_relerr());
  } else if (cfg.command == "optimise") {
    OptimiseOptions options = cfg.optim;
    options.expand = cfg.expand_steps();
    const OptimiseResult r = optimise(ops.problem(cfg.adjoint), c, options);
    {
      std::ofstream out = open_output(dir / "convergence.csv");
      write_history(out, r.history);
    }
    write_control(dir / "control.csv", r.control);
    const auto traj = ops.forward(r.control);
    snapshots(dir, traj, ops.cfg, cfg.snapshot_stride);
    s.cost = r.cost;
    s.relgrad = r.history.back().relgrad;
    std::vector<double> rel;
    for (const HistoryRow& h : r.history) rel.push_back(h.relgrad);
    std::string order = "n/a";
    try {
      order = short_number(verify::convergence_order(rel).order);
    } catch (const InsufficientDataError&) {
    }
    s.note = "iters=" + std::to_string(r.history.back().iter) + " stop=\"" + r.stop_reason + "\" order=" + order + " " +
             ops.describe(traj);
  } else {
    throw ConfigError("key run.command: " + cfg.command + " is not available for " + cfg.problem);
  }
  return s;
}

struct StefanOps {
  const stefan::Config& cfg;
  double control;

  ControlVector zero() const { return stefan::zero_control(cfg); }
  stefan::Trajectory forward(const ControlVector& c) const { return stefan::forward_solve(cfg, c); }
  double cost(const stefan::Trajectory& t) const { return stefan::cost(t, cfg); }
  stefan::Adjoint adjoint(const stefan::Trajectory& t, const ControlVector& c, AdjointOptions o) const {
    return stefan::adjoint_solve(t, c, cfg, o);
  }
  Problem problem(AdjointOptions o) const { return stefan::make_problem(cfg, o); }
  std::string describe(const stefan::Trajectory& t) const { return "rms=" + short_number(stefan::ellipse_rms(t, cfg)); }
};

struct NavierStokesOps {
  const navier_stokes::Config& cfg;
  double control;

  ControlVector zero() const { return navier_stokes::zero_control(cfg); }
  navier_stokes::Trajectory forward(const ControlVector& c) const { return navier_stokes::forward_solve(cfg, c); }
  double cost(const navier_stokes::Trajectory& t) const { return navier_stokes::cost(t, cfg); }
  navier_stokes::Adjoint adjoint(const navier_stokes::Trajectory& t, const ControlVector& c, AdjointOptions o) const {
    return navier_stokes::adjoint_solve(t, c, cfg, o);
  }
  Problem problem(AdjointOptions o) const { return navier_stokes::make_problem(cfg, o); }
  std::string describe(const navier_stokes::Trajectory& t) const {
    return "surface_speed=" + short_number(navier_stokes::mean_surface_speed(t, cfg));
  }
};

RunSummary run_suite(const RunConfig& cfg) {
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  const verify::SuiteResult r = verify::shape_calculus_suite(cfg.suite);
  std::ofstream out = open_output(dir / "shapecalc.csv");
  verify::write_suite(out, r);
  RunSummary s;
  s.cost = nan;
  s.relgrad = nan;
  int failed = 0;
  for (const verify::SuiteRow& row : r.rows) failed += row.pass ? 0 : 1;
  s.ok = failed == 0;
  s.note = "rows=" + std::to_string(r.rows.size()) + " failed=" + std::to_string(failed);
  return s;
}

}  // namespace

std::string RunSummary::line() const {
  std::string l = "J=" + short_number(cost) + " relgrad=" + short_number(relgrad) + " wall=" +
                  short_number(wall_seconds) + "s";
  if (!note.empty()) l += " " + note;
  return l;
}

RunSummary run(const RunConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  RunSummary s;
  if (cfg.problem == "verify") {
    s = run_suite(cfg);
  } else if (cfg.problem == "stefan") {
    s = run_problem(cfg, StefanOps{cfg.stefan, cfg.stefan_control});
  } else {
    s = run_problem(cfg, NavierStokesOps{cfg.navier_stokes, cfg.navier_stokes_control});
  }
  s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  {
    std::ofstream out = open_output(fs::path(cfg.output) / "config.ini");
    out << dump_config(cfg);
  }
  return s;
}

}  // namespace fbopt
