#pragma once

#include <array>
#include <functional>
#include <span>

#include "fbopt/geometry.hpp"
#include "fbopt/meshless.hpp"

namespace fbopt {

/// One step map x -> x + displacement(x) between two clouds with identical point order.
struct StepTransform {
  PointCloud base;
  VectorField displacement;
  PointCloud moved;
};

/// Restricts a per-point velocity to what each point may follow: fixed points stay, sliding
/// points keep the component along their slide direction.
VectorField mobility_projection(const PointCloud& cloud, std::span<const Vec2> flux);

/// displacement = tau * flux (after mobility projection); throws FoldOverError when the map
/// loses orientation.
StepTransform step_transform(const PointCloud& cloud, std::span<const Vec2> flux, double tau);

/// Lagrangian carry: values travel with their points, bit for bit.
Field push_forward_carry(std::span<const double> f, const StepTransform& t);
VectorField push_forward_carry(std::span<const Vec2> f, const StepTransform& t);

/// Evaluates `f_next` (on the moved cloud) at the images of the base points.
Field pull_back(std::span<const double> f_next, const StepTransform& t);

struct DetExpansion {
  Field approx;  // 1 + tau div(flux)
  Field exact;   // det(I + tau grad flux)
};

DetExpansion det_expansion(std::span<const Vec2> flux, const StencilSet& s, double tau);

/// Row-major 2x2 Jacobian (d1/dx, d1/dy, d2/dx, d2/dy).
using Jacobian2 = std::array<double, 4>;

/// Max over interior points of |Div(det(grad Phi) grad Phi^{-T})| with the cofactor field
/// built from the analytic Jacobian and differentiated by the stencils.
double piola_residual(const std::function<Jacobian2(Vec2)>& grad_phi, const StencilSet& s, const PointCloud& cloud);

/// Same with grad Phi = I + grad(displacement) estimated by the stencils on the base cloud.
double piola_residual(const StepTransform& t, const StencilSet& s);

struct ShapeTerms {
  Field volume;    // -tau (lambda o Phi) grad(phi) . F'(y)
  Field boundary;  // tau phi (lambda o Phi) F'(y) . n, zero at interior points
};

ShapeTerms pushfw_shape_terms(std::span<const double> phi, std::span<const double> lam_pulled, std::span<const double> y,
                              std::span<const Vec2> fprime_of_y, const StencilSet& s, const PointCloud& cloud,
                              double tau);

/// Variant with a given gradient of phi.
ShapeTerms pushfw_shape_terms(std::span<const double> phi, std::span<const Vec2> grad_phi,
                              std::span<const double> lam_pulled, std::span<const Vec2> fprime_of_y,
                              const PointCloud& cloud, double tau);

}  // namespace fbopt
