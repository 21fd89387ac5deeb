#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fbopt {

/// Time-indexed control: `slices` slices n = 1..slices of `width` values each. The inner
/// product weights every slice by `tau`.
struct ControlVector {
  int slices = 0;
  int width = 0;
  double tau = 1.0;
  std::vector<double> values;

  ControlVector() = default;
  ControlVector(int slices, int width, double tau)
      : slices(slices), width(width), tau(tau), values(static_cast<std::size_t>(slices) * width, 0.0) {}

  std::size_t size() const { return values.size(); }
  std::span<double> slice(int n) { return {values.data() + static_cast<std::size_t>(n - 1) * width, static_cast<std::size_t>(width)}; }
  std::span<const double> slice(int n) const {
    return {values.data() + static_cast<std::size_t>(n - 1) * width, static_cast<std::size_t>(width)};
  }
};

/// sum_n tau <x^n, y^n>. Throws ShapeMismatchError on different layouts.
double control_inner_product(const ControlVector& x, const ControlVector& y, double tau);
double control_inner_product(const ControlVector& x, const ControlVector& y);
double control_norm(const ControlVector& x);

/// x + s * d
ControlVector axpy(const ControlVector& x, double s, const ControlVector& d);

/// Objective and gradient callbacks. The gradient is the representative in the
/// tau-weighted inner product.
struct Problem {
  std::function<double(const ControlVector&)> value;
  std::function<std::pair<double, ControlVector>(const ControlVector&)> value_and_gradient;
};

struct ArmijoParams {
  double initial_step = 1.0;
  double contraction = 0.5;
  double slope = 1e-4;
  int max_halvings = 30;
  /// Growth factor and cap for steps that pass at once along a steepest-descent direction.
  double expansion = 2.0;
  int max_expansions = 30;
};

struct HistoryRow {
  int iter = 0;
  double cost = 0.0;
  double relgrad = 0.0;
  double step = 0.0;
  int resets = 0;
};

/// Dense inverse-Hessian approximation with the tau-weighted inner product.
struct BfgsState {
  Eigen::MatrixXd h;
  int resets = 0;
  bool identity = true;  // h is the identity (fresh or just reset)
  std::vector<HistoryRow> history;

  explicit BfgsState(std::size_t n = 0) : h(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))) {}
  void reset();
};

/// d = -H g; resets H and returns -g when that is not a descent direction.
ControlVector bfgs_direction(BfgsState& state, const ControlVector& g);

/// Inverse BFGS update; resets H on curvature violation or loss of definiteness. An identity H
/// is first scaled by <s,y>/<y,y>.
void bfgs_update(BfgsState& state, const ControlVector& s, const ControlVector& y);

struct LineSearchResult {
  double step = 0.0;
  double cost = 0.0;
};

/// Backtracking from `initial_step`. Evaluations that throw a library error count as
/// rejected steps. With `expand`, an initial step that passes is grown by `expansion` while
/// the sufficient-decrease test holds and the cost keeps falling. Throws LineSearchError after
/// `max_halvings` and std::invalid_argument for a non-descent direction.
LineSearchResult armijo_search(const std::function<double(const ControlVector&)>& value, const ControlVector& c,
                               double cost_c, const ControlVector& d, const ControlVector& g,
                               const ArmijoParams& params = {}, bool expand = false);

struct OptimiseOptions {
  double tol_rel = 1e-3;
  int max_iter = 100;
  double abs_floor = 1e-14;
  ArmijoParams armijo{};
  /// Lets steepest-descent steps grow past `armijo.initial_step`; for controls whose natural
  /// scale is far from the gradient's.
  bool expand = false;
  /// Called after every accepted iterate.
  std::function<void(const HistoryRow&, const ControlVector&)> on_iterate;
};

struct OptimiseResult {
  ControlVector control;
  double cost = 0.0;
  std::vector<HistoryRow> history;
  std::string stop_reason;
};

OptimiseResult optimise(const Problem& problem, const ControlVector& c0, const OptimiseOptions& options = {});

/// Writes `iter,cost,relgrad,step,resets`.
void write_history(std::ostream& out, const std::vector<HistoryRow>& history);

}  // namespace fbopt
