#include "fbopt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include "fbopt/errors.hpp"
#include "fbopt/meshless.hpp"
#include "fbopt/stefan.hpp"
#include "fbopt/transport.hpp"

namespace fbopt::verify {

double relative_error(double a, double f) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-14});
}

double GradCheckReport::min_relerr(int direction) const {
  double best = std::numeric_limits<double>::infinity();
  for (const GradCheckRow& r : rows) {
    if (r.direction != direction) continue;
    if (std::isnan(r.relerr)) return r.relerr;
    best = std::min(best, r.relerr);
  }
  return best;
}

double GradCheckReport::worst_relerr() const {
  double worst = 0.0;
  for (int d = 0; d < directions(); ++d) {
    const double e = min_relerr(d);
    if (std::isnan(e)) return e;
    worst = std::max(worst, e);
  }
  return worst;
}

int GradCheckReport::directions() const {
  int n = 0;
  for (const GradCheckRow& r : rows) n = std::max(n, r.direction + 1);
  return n;
}

std::vector<double> h_sweep() { return {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7}; }

GradCheckReport fd_gradient_check(const Problem& problem, const ControlVector& c, const GradCheckOptions& options) {
  GradCheckReport report;
  const auto [cost, g] = problem.value_and_gradient(c);
  (void)cost;
  const double scale = std::max(1.0, control_norm(c));
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  for (int k = 0; k < options.directions; ++k) {
    ControlVector d = c;
    for (double& v : d.values) v = normal(rng);
    const double len = control_norm(d);
    for (double& v : d.values) v /= len;
    const double adjoint = control_inner_product(g, d);
    for (double h_rel : options.h_list) {
      const double h = h_rel * scale;
      const double fd = (problem.value(axpy(c, h, d)) - problem.value(axpy(c, -h, d))) / (2.0 * h);
      report.rows.push_back({k, h, adjoint, fd, relative_error(adjoint, fd)});
    }
  }
  return report;
}

void write_gradcheck(std::ostream& out, const GradCheckReport& report) {
  out << "direction,h,adjoint,fd,relerr\n";
  for (const GradCheckRow& r : report.rows) {
    out << r.direction << ',' << format_number(r.h) << ',' << format_number(r.adjoint) << ',' << format_number(r.fd)
        << ',' << format_number(r.relerr) << '\n';
  }
}

OrderFit convergence_order(std::span<const double> series, double flatness) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t k = 0; k + 1 < series.size(); ++k) {
    const double a = series[k];
    const double b = series[k + 1];
    if (!(a > 0.0) || !(b > 0.0)) continue;
    if (std::abs(b / a - 1.0) < flatness) continue;
    xs.push_back(std::log(a));
    ys.push_back(std::log(b));
  }
  const int n = static_cast<int>(xs.size());
  if (n < 3) {
    throw InsufficientDataError("convergence order needs at least 3 non-plateau pairs, got " + std::to_string(n));
  }
  double mx = 0.0;
  double my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw InsufficientDataError("convergence order needs a series that changes in magnitude");
  OrderFit fit;
  fit.order = sxy / sxx;
  fit.decades_per_iter = (mx - my) / std::numbers::ln10;
  fit.pairs = n;
  return fit;
}

// ---------------------------------------------------------------------------
// Quadrature

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw ConfigError("Gauss-Legendre rule needs at least one node");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  // P_n(x) and P_n'(x) by the three-term recurrence.
  auto legendre = [n](double x) {
    double p0 = 1.0;
    double p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    return std::pair{p1, n * (x * p1 - p0) / (x * x - 1.0)};
  };
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre(x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double dp = legendre(x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
}

PointCloud gauss_rectangle(const Rectangle& r, int n) {
  std::vector<double> t;
  std::vector<double> w;
  gauss_legendre(n, t, w);
  const double lx = r.hi.x - r.lo.x;
  const double ly = r.hi.y - r.lo.y;
  auto at = [](double lo, double len, double s) { return lo + 0.5 * len * (s + 1.0); };

  PointCloud c;
  c.segments = {"bottom", "right", "top", "left"};
  c.spacing = std::min(lx, ly) / n;
  auto add = [&](Vec2 p, int kind, Vec2 normal, double weight) {
    c.positions.push_back(p);
    c.kind.push_back(kind);
    c.normals.push_back(normal);
    c.weights.push_back(weight);
    c.strip.push_back(0.0);
    c.mobility.push_back(Mobility::free);
    c.slide_dir.push_back({});
    if (kind >= 0) c.ring.push_back(static_cast<int>(c.positions.size()) - 1);
  };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      add({at(r.lo.x, lx, t[i]), at(r.lo.y, ly, t[j])}, interior_kind, {}, 0.25 * lx * ly * w[i] * w[j]);
    }
  }
  for (int i = 0; i < n; ++i) add({at(r.lo.x, lx, t[i]), r.lo.y}, 0, {0.0, -1.0}, 0.5 * lx * w[i]);
  for (int i = 0; i < n; ++i) add({r.hi.x, at(r.lo.y, ly, t[i])}, 1, {1.0, 0.0}, 0.5 * ly * w[i]);
  for (int i = n - 1; i >= 0; --i) add({at(r.lo.x, lx, t[i]), r.hi.y}, 2, {0.0, 1.0}, 0.5 * lx * w[i]);
  for (int i = n - 1; i >= 0; --i) add({r.lo.x, at(r.lo.y, ly, t[i])}, 3, {-1.0, 0.0}, 0.5 * ly * w[i]);
  return c;
}

// ---------------------------------------------------------------------------
// Suite

namespace {

SuiteRow at_most(std::string check, double spacing, double tau, double value, double hi) {
  return {std::move(check), spacing, tau, value, 0.0, hi, value <= hi};
}

SuiteRow within(std::string check, double spacing, double tau, double value, double lo, double hi) {
  return {std::move(check), spacing, tau, value, lo, hi, value >= lo && value <= hi};
}

void piola_rows(double h, std::vector<SuiteRow>& rows) {
  const PointCloud cloud = seed_cloud(Rectangle{{0.0, 0.0}, {1.0, 1.0}}, h);
  const StencilSet s = build_stencils(cloud);

  rows.push_back(at_most("piola_identity", h, 0.0,
                         piola_residual([](Vec2) { return Jacobian2{1.0, 0.0, 0.0, 1.0}; }, s, cloud), 1e-12));
  double affine = 0.0;
  for (const Jacobian2& a : {Jacobian2{1.2, 0.3, -0.1, 0.9}, Jacobian2{0.8, -0.4, 0.2, 1.1}}) {
    affine = std::max(affine, piola_residual([a](Vec2) { return a; }, s, cloud));
  }
  rows.push_back(at_most("piola_affine", h, 0.0, affine, 1e-10));

  // Affine displacement through the stencil Jacobian of a step transform.
  const double tau = 0.1;
  VectorField flux(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec2 p = cloud.positions[i];
    flux[i] = {0.5 * p.x - 0.3 * p.y + 0.2, 0.4 * p.x + 0.1 * p.y - 0.1};
  }
  rows.push_back(at_most("piola_affine_step", h, tau, piola_residual(step_transform(cloud, flux, tau), s), 1e-10));

  // (x + 0.1 y^2, y): the cofactor field is linear, which the stencils reproduce.
  rows.push_back(at_most("piola_quadratic", h, 0.0,
                         piola_residual([](Vec2 p) { return Jacobian2{1.0, 0.2 * p.y, 0.0, 1.0}; }, s, cloud), 1e-8));
}

void det_rows(double h, std::span<const double> taus, std::vector<SuiteRow>& rows) {
  const PointCloud cloud = seed_cloud(Rectangle{{0.0, 0.0}, {1.0, 1.0}}, h);
  const StencilSet s = build_stencils(cloud);
  VectorField flux(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec2 p = cloud.positions[i];
    flux[i] = {std::sin(2.0 * p.x) * std::cos(p.y), p.x * p.y * p.y + std::cos(p.x)};
  }
  auto remainder = [&](double tau) {
    const DetExpansion d = det_expansion(flux, s, tau);
    double m = 0.0;
    for (std::size_t i = 0; i < d.exact.size(); ++i) m = std::max(m, std::abs(d.exact[i] - d.approx[i]));
    return m;
  };
  for (double tau : taus) rows.push_back(within("det_ratio", h, tau, remainder(tau) / remainder(0.5 * tau), 3.5, 4.5));
}

// Push-forward derivative on analytic data over the unit square,
// K(Phi) = int phi (lambda o Phi) det(grad Phi), in two settings:
//  scalar state: Phi = x + tau F(y(x)), F(y) = (y^2, sin y), perturbed along y + eps psi;
//  vector state: Phi = x + tau u(x), perturbed along u + eps w.
// The scalar setting has no tau^2 remainder (grad Phi - I has rank one), the vector one does.
struct PushForwardData {
  static double y(Vec2 p) { return std::sin(p.x) + 0.5 * p.y * p.y; }
  static Vec2 grad_y(Vec2 p) { return {std::cos(p.x), p.y}; }
  static Vec2 f(double v) { return {v * v, std::sin(v)}; }
  static Vec2 fprime(double v) { return {2.0 * v, std::cos(v)}; }
  static double psi(Vec2 p) { return 1.0 + p.x - p.y * p.y; }
  static Vec2 grad_psi(Vec2 p) { return {1.0, -2.0 * p.y}; }

  static Vec2 u(Vec2 p) { return {std::sin(p.x) * std::cos(p.y), p.x * p.y + 0.5 * std::cos(p.x)}; }
  static Jacobian2 grad_u(Vec2 p) {
    return {std::cos(p.x) * std::cos(p.y), -std::sin(p.x) * std::sin(p.y), p.y - 0.5 * std::sin(p.x), p.x};
  }
  static Vec2 w(Vec2 p) { return {1.0 + p.y, p.x * p.x}; }
  static Jacobian2 grad_w(Vec2 p) { return {0.0, 1.0, 2.0 * p.x, 0.0}; }

  static double phi(Vec2 p) { return std::cos(p.x) * std::exp(p.y); }
  static Vec2 grad_phi(Vec2 p) { return {-std::sin(p.x) * std::exp(p.y), std::cos(p.x) * std::exp(p.y)}; }
  static double lambda(Vec2 p) { return 1.0 + p.x * p.y + std::sin(p.y); }
};

double det_i_plus(double tau, const Jacobian2& a) { return (1.0 + tau * a[0]) * (1.0 + tau * a[3]) - tau * tau * a[1] * a[2]; }

double pushforward_pairing(const PointCloud& q, bool vector_state, double tau, double eps) {
  using D = PushForwardData;
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q.is_boundary(i)) continue;
    const Vec2 p = q.positions[i];
    Vec2 image;
    double det;
    if (vector_state) {
      image = p + tau * (D::u(p) + eps * D::w(p));
      const Jacobian2 gu = D::grad_u(p);
      const Jacobian2 gw = D::grad_w(p);
      det = det_i_plus(tau, {gu[0] + eps * gw[0], gu[1] + eps * gw[1], gu[2] + eps * gw[2], gu[3] + eps * gw[3]});
    } else {
      const double v = D::y(p) + eps * D::psi(p);
      image = p + tau * D::f(v);
      // I + tau F'(v) grad(v)^T has determinant 1 + tau F'(v) . grad(v).
      det = 1.0 + tau * dot(D::fprime(v), D::grad_y(p) + eps * D::grad_psi(p));
    }
    sum += q.weights[i] * D::phi(p) * D::lambda(image) * det;
  }
  return sum;
}

// Boundary plus volume terms paired with the perturbation. For the vector state the
// direction DF(y) w is w itself.
double pushforward_terms(const PointCloud& q, bool vector_state, double tau, bool boundary_term) {
  using D = PushForwardData;
  const std::size_t n = q.size();
  Field phi(n);
  VectorField grad_phi(n);
  Field lam(n);
  VectorField dir(n);
  Field weight(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = q.positions[i];
    phi[i] = D::phi(p);
    grad_phi[i] = D::grad_phi(p);
    if (vector_state) {
      lam[i] = D::lambda(p + tau * D::u(p));
      dir[i] = D::w(p);
      weight[i] = 1.0;
    } else {
      const double v = D::y(p);
      lam[i] = D::lambda(p + tau * D::f(v));
      dir[i] = D::fprime(v);
      weight[i] = D::psi(p);
    }
  }
  const ShapeTerms t = pushfw_shape_terms(phi, grad_phi, lam, dir, q, tau);
  Field vol(n);
  Field bnd(n);
  for (std::size_t i = 0; i < n; ++i) {
    vol[i] = t.volume[i] * weight[i];
    bnd[i] = t.boundary[i] * weight[i];
  }
  return volume_integral(q, vol) + (boundary_term ? boundary_integral(q, bnd) : 0.0);
}

void pushforward_rows(std::span<const double> taus, bool boundary_term, std::vector<SuiteRow>& rows) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const PointCloud q = gauss_rectangle(Rectangle{{0.0, 0.0}, {1.0, 1.0}}, 16);
  const double eps = 1e-5;
  auto fd = [&](bool vector_state, double tau) {
    return (pushforward_pairing(q, vector_state, tau, eps) - pushforward_pairing(q, vector_state, tau, -eps)) /
           (2.0 * eps);
  };
  auto error = [&](double tau) { return std::abs(pushforward_terms(q, true, tau, boundary_term) - fd(true, tau)); };
  for (double tau : taus) {
    const double e = error(tau);
    const double ratio = e / error(0.5 * tau);
    rows.push_back({"pushforward_error", 0.0, tau, e, 0.0, inf, std::isfinite(e)});
    rows.push_back({"pushforward_ratio", 0.0, tau, ratio, 3.0, inf, ratio >= 3.0});
    const double f = fd(false, tau);
    rows.push_back(at_most("pushforward_scalar", 0.0, tau,
                           relative_error(pushforward_terms(q, false, tau, boundary_term), f), 1e-6));
  }
}

// d/dPhi int y (lambda o Phi) det(grad Phi) [psi] with y = x1, lambda = x2 and affine Phi,
// against the boundary-plus-volume expression.
void derivative_identity_rows(std::vector<SuiteRow>& rows) {
  const PointCloud q = gauss_rectangle(Rectangle{{0.0, 0.0}, {1.0, 1.0}}, 8);
  const double a[4] = {1.1, 0.2, -0.3, 0.9};
  const Vec2 b{0.1, -0.2};
  auto phi = [&](Vec2 p) { return Vec2{a[0] * p.x + a[1] * p.y + b.x, a[2] * p.x + a[3] * p.y + b.y}; };
  auto psi = [](Vec2 p) { return Vec2{p.y * p.y, p.x * p.y}; };
  auto grad_psi = [](Vec2 p) { return Jacobian2{0.0, 2.0 * p.y, p.y, p.x}; };

  auto k = [&](double eps) {
    double sum = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (q.is_boundary(i)) continue;
      const Vec2 p = q.positions[i];
      const Vec2 image = phi(p) + eps * psi(p);
      const Jacobian2 g = grad_psi(p);
      const double det = (a[0] + eps * g[0]) * (a[3] + eps * g[3]) - (a[1] + eps * g[1]) * (a[2] + eps * g[2]);
      sum += q.weights[i] * p.x * image.y * det;
    }
    return sum;
  };
  const double eps = 1e-4;
  const double fd = (k(eps) - k(-eps)) / (2.0 * eps);

  // det(A) A^{-T} is the cofactor matrix of A.
  const double cof[4] = {a[3], -a[2], -a[1], a[0]};
  auto cof_apply = [&](Vec2 v) { return Vec2{cof[0] * v.x + cof[1] * v.y, cof[2] * v.x + cof[3] * v.y}; };
  double lhs = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Vec2 p = q.positions[i];
    const double lam = phi(p).y;
    if (q.is_boundary(i)) {
      lhs += q.weights[i] * p.x * lam * dot(cof_apply(q.normals[i]), psi(p));
    } else {
      lhs -= q.weights[i] * lam * dot(cof_apply({1.0, 0.0}), psi(p));
    }
  }
  rows.push_back(at_most("derivative_identity", 0.0, 0.0, std::abs(lhs - fd), 1e-6));
}

void stefan_rows(const SuiteOptions& options, std::vector<SuiteRow>& rows) {
  if (options.stefan_directions <= 0) return;
  stefan::Config cfg;
  cfg.spacing = 0.06;
  cfg.tau = 0.01;
  cfg.t_final = 0.1;
  ControlVector c = stefan::zero_control(cfg);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (double& v : c.values) v = u(rng);
  GradCheckOptions gc;
  gc.directions = options.stefan_directions;
  const GradCheckReport r = fd_gradient_check(stefan::make_problem(cfg, options.stefan_adjoint), c, gc);
  rows.push_back(at_most("stefan_gradient", cfg.spacing, cfg.tau, r.worst_relerr(), 0.05));
}

}  // namespace

bool SuiteResult::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const SuiteRow& r) { return r.pass; });
}

SuiteResult shape_calculus_suite(const SuiteOptions& options) {
  SuiteResult out;
  for (double h : options.spacings) {
    piola_rows(h, out.rows);
    det_rows(h, options.taus, out.rows);
  }
  pushforward_rows(options.pushforward_taus, options.boundary_term, out.rows);
  derivative_identity_rows(out.rows);
  stefan_rows(options, out.rows);
  return out;
}

void write_suite(std::ostream& out, const SuiteResult& result) {
  out << "check,spacing,tau,value,lo,hi,pass\n";
  for (const SuiteRow& r : result.rows) {
    out << r.check << ',' << format_number(r.spacing) << ',' << format_number(r.tau) << ',' << format_number(r.value)
        << ',' << format_number(r.lo) << ',' << format_number(r.hi) << ',' << (r.pass ? 1 : 0) << '\n';
  }
}

}  // namespace fbopt::verify
