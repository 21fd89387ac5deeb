#include "fbopt/optim.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "fbopt/errors.hpp"
#include "fbopt/geometry.hpp"

namespace fbopt {

namespace {

void check_layout(const ControlVector& x, const ControlVector& y) {
  if (x.slices != y.slices || x.width != y.width || x.values.size() != y.values.size()) {
    throw ShapeMismatchError("control layouts differ: " + std::to_string(x.slices) + "x" + std::to_string(x.width) +
                             " vs " + std::to_string(y.slices) + "x" + std::to_string(y.width));
  }
}

Eigen::Map<const Eigen::VectorXd> view(const ControlVector& x) {
  return {x.values.data(), static_cast<Eigen::Index>(x.values.size())};
}

}  // namespace

double control_inner_product(const ControlVector& x, const ControlVector& y, double tau) {
  check_layout(x, y);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.values.size(); ++i) sum += x.values[i] * y.values[i];
  return tau * sum;
}

double control_inner_product(const ControlVector& x, const ControlVector& y) {
  return control_inner_product(x, y, x.tau);
}

double control_norm(const ControlVector& x) { return std::sqrt(control_inner_product(x, x)); }

ControlVector axpy(const ControlVector& x, double s, const ControlVector& d) {
  check_layout(x, d);
  ControlVector out = x;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += s * d.values[i];
  return out;
}

void BfgsState::reset() {
  h.setIdentity();
  identity = true;
  ++resets;
}

ControlVector bfgs_direction(BfgsState& state, const ControlVector& g) {
  if (state.h.rows() != static_cast<Eigen::Index>(g.size())) {
    state.h = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
  }
  ControlVector d = g;
  Eigen::Map<Eigen::VectorXd>(d.values.data(), static_cast<Eigen::Index>(d.size())) = -(state.h * view(g));
  if (control_inner_product(d, g) >= 0.0) {
    state.reset();
    for (std::size_t i = 0; i < d.size(); ++i) d.values[i] = -g.values[i];
  }
  return d;
}

void bfgs_update(BfgsState& state, const ControlVector& s, const ControlVector& y) {
  const double sy = control_inner_product(s, y);
  if (!(sy > 1e-12 * control_norm(s) * control_norm(y))) {
    state.reset();
    return;
  }
  const double rho = 1.0 / sy;
  // First update after a reset: rescale the identity to the observed curvature.
  if (state.identity) state.h *= sy / control_inner_product(y, y);
  const Eigen::VectorXd sv = view(s);
  const Eigen::VectorXd my = s.tau * view(y);
  const Eigen::VectorXd hy = state.h * my;
  const double yhy = my.dot(hy);
  // (I - rho s (My)^T) H (I - rho (My) s^T) + rho s (Ms)^T, expanded.
  state.h.noalias() -= rho * (sv * hy.transpose() + hy * sv.transpose());
  state.h.noalias() += (rho * rho * yhy + rho * s.tau) * (sv * sv.transpose());
  state.h = 0.5 * (state.h + state.h.transpose()).eval();
  state.identity = false;
  Eigen::LLT<Eigen::MatrixXd> llt(state.h);
  if (llt.info() != Eigen::Success) state.reset();
}

LineSearchResult armijo_search(const std::function<double(const ControlVector&)>& value, const ControlVector& c,
                               double cost_c, const ControlVector& d, const ControlVector& g,
                               const ArmijoParams& params, bool expand) {
  const double slope = control_inner_product(g, d);
  if (!(slope < 0.0)) throw std::invalid_argument("Armijo search needs a descent direction (<g, d> < 0)");
  auto accepted = [&](double step, double& trial) {
    trial = std::numeric_limits<double>::infinity();
    try {
      trial = value(axpy(c, step, d));
    } catch (const Error&) {
      // A step that folds the domain or breaks a solve is rejected like an increase.
    }
    return std::isfinite(trial) && trial <= cost_c + params.slope * step * slope;
  };
  double step = params.initial_step;
  double trial = 0.0;
  if (expand && accepted(step, trial)) {
    LineSearchResult best{step, trial};
    for (int k = 0; k < params.max_expansions; ++k) {
      step *= params.expansion;
      if (!accepted(step, trial) || !(trial < best.cost)) break;
      best = {step, trial};
    }
    return best;
  }
  if (expand) step *= params.contraction;
  for (int k = expand ? 1 : 0; k <= params.max_halvings; ++k) {
    if (accepted(step, trial)) return {step, trial};
    step *= params.contraction;
  }
  throw LineSearchError("no sufficient decrease after " + std::to_string(params.max_halvings) + " halvings");
}

OptimiseResult optimise(const Problem& problem, const ControlVector& c0, const OptimiseOptions& options) {
  OptimiseResult out;
  out.control = c0;
  auto [cost, g] = problem.value_and_gradient(c0);
  out.cost = cost;
  const double g0 = control_norm(g);
  BfgsState state(c0.size());
  state.resets = 0;
  out.history.push_back({0, cost, g0 > 0.0 ? 1.0 : 0.0, 0.0, 0});
  if (options.on_iterate) options.on_iterate(out.history.back(), out.control);
  if (g0 <= options.abs_floor) {
    out.stop_reason = "gradient below absolute floor";
    return out;
  }
  ControlVector c = c0;
  for (int k = 1; k <= options.max_iter; ++k) {
    ControlVector d = bfgs_direction(state, g);
    LineSearchResult ls;
    try {
      ls = armijo_search(problem.value, c, cost, d, g, options.armijo, options.expand && state.identity);
    } catch (const LineSearchError&) {
      state.reset();
      d = g;
      for (double& v : d.values) v = -v;
      try {
        ls = armijo_search(problem.value, c, cost, d, g, options.armijo, options.expand);
      } catch (const LineSearchError&) {
        out.stop_reason = "line search failed";
        break;
      }
    }
    ControlVector c_new = axpy(c, ls.step, d);
    auto [cost_new, g_new] = problem.value_and_gradient(c_new);
    ControlVector s = axpy(c_new, -1.0, c);
    ControlVector y = axpy(g_new, -1.0, g);
    bfgs_update(state, s, y);
    c = std::move(c_new);
    g = std::move(g_new);
    cost = cost_new;
    out.control = c;
    out.cost = cost;
    const double rel = control_norm(g) / g0;
    out.history.push_back({k, cost, rel, ls.step, state.resets});
    if (options.on_iterate) options.on_iterate(out.history.back(), c);
    if (rel <= options.tol_rel) {
      out.stop_reason = "converged";
      break;
    }
    if (control_norm(g) <= options.abs_floor) {
      out.stop_reason = "gradient below absolute floor";
      break;
    }
  }
  if (out.stop_reason.empty()) out.stop_reason = "iteration limit";
  state.history = out.history;
  return out;
}

void write_history(std::ostream& out, const std::vector<HistoryRow>& history) {
  out << "iter,cost,relgrad,step,resets\n";
  for (const HistoryRow& r : history) {
    out << r.iter << ',' << format_number(r.cost) << ',' << format_number(r.relgrad) << ',' << format_number(r.step)
        << ',' << r.resets << '\n';
  }
}

}  // namespace fbopt
