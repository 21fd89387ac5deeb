#include "fbopt/transport.hpp"

#include <algorithm>

#include "fbopt/errors.hpp"

namespace fbopt {

VectorField mobility_projection(const PointCloud& cloud, std::span<const Vec2> flux) {
  VectorField out(flux.begin(), flux.end());
  if (cloud.mobility.empty()) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (cloud.mobility[i]) {
      case Mobility::free: break;
      case Mobility::fixed: out[i] = Vec2{}; break;
      case Mobility::slide: out[i] = dot(out[i], cloud.slide_dir[i]) * cloud.slide_dir[i]; break;
    }
  }
  return out;
}

StepTransform step_transform(const PointCloud& cloud, std::span<const Vec2> flux, double tau) {
  if (flux.size() != cloud.size()) throw ShapeMismatchError("flux length does not match cloud");
  StepTransform t;
  t.base = cloud;
  t.displacement = mobility_projection(cloud, flux);
  for (Vec2& d : t.displacement) d *= tau;
  t.moved = apply_transform(cloud, t.displacement);
  return t;
}

Field push_forward_carry(std::span<const double> f, const StepTransform& t) {
  if (f.size() != t.base.size()) throw ShapeMismatchError("field length does not match base cloud");
  return Field(f.begin(), f.end());
}

VectorField push_forward_carry(std::span<const Vec2> f, const StepTransform& t) {
  if (f.size() != t.base.size()) throw ShapeMismatchError("field length does not match base cloud");
  return VectorField(f.begin(), f.end());
}

Field pull_back(std::span<const double> f_next, const StepTransform& t) {
  if (f_next.size() != t.moved.size()) throw ShapeMismatchError("field length does not match moved cloud");
  VectorField images(t.base.size());
  for (std::size_t i = 0; i < images.size(); ++i) images[i] = t.base.positions[i] + t.displacement[i];
  return interpolate(t.moved, f_next, images);
}

namespace {

std::vector<Jacobian2> stencil_jacobian(const StencilSet& s, std::span<const Vec2> v) {
  std::vector<Jacobian2> j(s.size(), Jacobian2{});
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (int k = s.start[i]; k < s.start[i + 1]; ++k) {
      const Vec2 w = v[s.nbr[k]];
      j[i][0] += s.dx[k] * w.x;
      j[i][1] += s.dy[k] * w.x;
      j[i][2] += s.dx[k] * w.y;
      j[i][3] += s.dy[k] * w.y;
    }
  }
  return j;
}

double cofactor_divergence(const std::vector<Jacobian2>& jac, const StencilSet& s, const PointCloud& cloud) {
  // det(A) A^{-T} = [[d, -c], [-b, a]] for A = [[a, b], [c, d]].
  const std::size_t n = jac.size();
  VectorField row1(n), row2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [a, b, c, d] = jac[i];
    if (!(std::abs(a * d - b * c) > 1e-14)) {
      throw FoldOverError("map Jacobian is singular at point " + std::to_string(i));
    }
    row1[i] = {d, -c};
    row2[i] = {-b, a};
  }
  const Field d1 = apply_divergence(s, row1);
  const Field d2 = apply_divergence(s, row2);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!cloud.is_boundary(i)) worst = std::max(worst, std::hypot(d1[i], d2[i]));
  }
  return worst;
}

}  // namespace

DetExpansion det_expansion(std::span<const Vec2> flux, const StencilSet& s, double tau) {
  const auto jac = stencil_jacobian(s, flux);
  DetExpansion out;
  out.approx.resize(jac.size());
  out.exact.resize(jac.size());
  for (std::size_t i = 0; i < jac.size(); ++i) {
    const auto [a, b, c, d] = jac[i];
    out.approx[i] = 1.0 + tau * (a + d);
    out.exact[i] = (1.0 + tau * a) * (1.0 + tau * d) - tau * tau * b * c;
  }
  return out;
}

double piola_residual(const std::function<Jacobian2(Vec2)>& grad_phi, const StencilSet& s, const PointCloud& cloud) {
  std::vector<Jacobian2> jac(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) jac[i] = grad_phi(cloud.positions[i]);
  return cofactor_divergence(jac, s, cloud);
}

double piola_residual(const StepTransform& t, const StencilSet& s) {
  auto jac = stencil_jacobian(s, t.displacement);
  for (auto& j : jac) {
    j[0] += 1.0;
    j[3] += 1.0;
  }
  return cofactor_divergence(jac, s, t.base);
}

ShapeTerms pushfw_shape_terms(std::span<const double> phi, std::span<const Vec2> grad_phi,
                              std::span<const double> lam_pulled, std::span<const Vec2> fprime_of_y,
                              const PointCloud& cloud, double tau) {
  const std::size_t n = cloud.size();
  ShapeTerms out{Field(n, 0.0), Field(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    out.volume[i] = -tau * lam_pulled[i] * dot(grad_phi[i], fprime_of_y[i]);
    if (cloud.is_boundary(i)) out.boundary[i] = tau * phi[i] * lam_pulled[i] * dot(fprime_of_y[i], cloud.normals[i]);
  }
  return out;
}

ShapeTerms pushfw_shape_terms(std::span<const double> phi, std::span<const double> lam_pulled, std::span<const double> y,
                              std::span<const Vec2> fprime_of_y, const StencilSet& s, const PointCloud& cloud,
                              double tau) {
  if (y.size() != cloud.size()) throw ShapeMismatchError("state length does not match cloud");
  const VectorField grad_phi = apply_gradient(s, phi);
  return pushfw_shape_terms(phi, grad_phi, lam_pulled, fprime_of_y, cloud, tau);
}

}  // namespace fbopt
