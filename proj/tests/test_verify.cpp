#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fbopt/errors.hpp"
#include "fbopt/verify.hpp"

using namespace fbopt;

namespace {

/// J(c) = sum_n tau sum_k (k+1) c_k^2 / 2 + sin(c_0); gradient in the tau metric.
Problem analytic_problem() {
  Problem p;
  auto value = [](const ControlVector& c) {
    double j = 0.0;
    for (int n = 1; n <= c.slices; ++n)
      for (int k = 0; k < c.width; ++k) j += c.tau * 0.5 * (k + 1) * c.slice(n)[k] * c.slice(n)[k];
    return j + std::sin(c.values[0]);
  };
  p.value = value;
  p.value_and_gradient = [value](const ControlVector& c) {
    ControlVector g(c.slices, c.width, c.tau);
    for (int n = 1; n <= c.slices; ++n)
      for (int k = 0; k < c.width; ++k) g.slice(n)[k] = (k + 1) * c.slice(n)[k];
    g.values[0] += std::cos(c.values[0]) / c.tau;
    return std::pair{value(c), g};
  };
  return p;
}

ControlVector start() {
  ControlVector c(4, 3, 0.1);
  for (std::size_t i = 0; i < c.size(); ++i) c.values[i] = std::cos(1.0 + i);
  return c;
}

}  // namespace

TEST(RelativeError, Basics) {
  EXPECT_EQ(verify::relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(verify::relative_error(1.0, 0.9), 0.1);
  EXPECT_DOUBLE_EQ(verify::relative_error(-2.0, 2.0), 2.0);
  EXPECT_EQ(verify::relative_error(0.0, 0.0), 0.0);
}

TEST(GradCheck, AnalyticProblem) {
  verify::GradCheckOptions o;
  o.h_list = {1e-5};
  const verify::GradCheckReport r = verify::fd_gradient_check(analytic_problem(), start(), o);
  EXPECT_EQ(r.directions(), 5);
  EXPECT_LE(r.worst_relerr(), 1e-8);
}

TEST(GradCheck, SweepFloorsAtMinimum) {
  verify::GradCheckOptions o;
  o.h_list = verify::h_sweep();
  ASSERT_EQ(o.h_list.size(), 6u);
  EXPECT_EQ(o.h_list.front(), 1e-2);
  EXPECT_EQ(o.h_list.back(), 1e-7);
  const verify::GradCheckReport r = verify::fd_gradient_check(analytic_problem(), start(), o);
  for (int d = 0; d < r.directions(); ++d) {
    double lo = 1.0, first = 0.0;
    for (const verify::GradCheckRow& row : r.rows) {
      if (row.direction != d) continue;
      if (first == 0.0) first = row.relerr;
      lo = std::min(lo, row.relerr);
    }
    EXPECT_EQ(r.min_relerr(d), lo);
    EXPECT_LT(lo, first);
  }
}

TEST(GradCheck, WrongGradientIsCaught) {
  Problem p = analytic_problem();
  auto good = p.value_and_gradient;
  p.value_and_gradient = [good](const ControlVector& c) {
    auto [j, g] = good(c);
    for (double& v : g.values) v *= 1.2;
    return std::pair{j, g};
  };
  EXPECT_GT(verify::fd_gradient_check(p, start(), {}).worst_relerr(), 0.1);
}

TEST(GradCheck, CsvHeader) {
  std::ostringstream out;
  verify::write_gradcheck(out, verify::fd_gradient_check(analytic_problem(), start(), {}));
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "direction,h,adjoint,fd,relerr");
}

TEST(ConvergenceOrder, Geometric) {
  std::vector<double> s;
  for (int k = 0; k < 8; ++k) s.push_back(std::pow(10.0, -k));
  const verify::OrderFit f = verify::convergence_order(s);
  EXPECT_NEAR(f.order, 1.0, 1e-12);
  EXPECT_NEAR(f.decades_per_iter, 1.0, 1e-12);
  EXPECT_EQ(f.pairs, 7);
}

TEST(ConvergenceOrder, Quadratic) {
  std::vector<double> s{0.5};
  for (int k = 0; k < 4; ++k) s.push_back(s.back() * s.back());
  EXPECT_NEAR(verify::convergence_order(s).order, 2.0, 1e-12);
}

TEST(ConvergenceOrder, PlateausSkipped) {
  const std::vector<double> s{1.0, 0.1, 0.1, 0.01, 0.001, 0.001, 1e-4};
  const verify::OrderFit f = verify::convergence_order(s);
  EXPECT_EQ(f.pairs, 4);
  EXPECT_NEAR(f.order, 1.0, 1e-12);
}

TEST(ConvergenceOrder, ConstantSeries) {
  const std::vector<double> s(6, 0.3);
  EXPECT_THROW(verify::convergence_order(s), InsufficientDataError);
}

TEST(GaussLegendre, ExactForPolynomials) {
  std::vector<double> x, w;
  verify::gauss_legendre(5, x, w);
  ASSERT_EQ(x.size(), 5u);
  for (int p = 0; p <= 9; ++p) {
    double q = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) q += w[i] * std::pow(x[i], p);
    const double exact = p % 2 == 1 ? 0.0 : 2.0 / (p + 1);
    EXPECT_NEAR(q, exact, 1e-14);
  }
}

TEST(GaussRectangle, AreaAndPerimeter) {
  const PointCloud c = verify::gauss_rectangle(Rectangle{{-1.0, 0.0}, {2.0, 0.5}}, 6);
  const Field one(c.size(), 1.0);
  EXPECT_NEAR(volume_integral(c, one), 1.5, 1e-13);
  EXPECT_NEAR(boundary_integral(c, one), 7.0, 1e-13);
  EXPECT_GT(ring_area(c), 0.0);
}

TEST(Suite, AllRowsPass) {
  const verify::SuiteResult r = verify::shape_calculus_suite({});
  ASSERT_FALSE(r.rows.empty());
  for (const verify::SuiteRow& row : r.rows) EXPECT_TRUE(row.pass) << row.check << " value " << row.value;
  EXPECT_TRUE(r.all_pass());
  int affine = 0, det = 0, identity = 0;
  for (const verify::SuiteRow& row : r.rows) {
    if (row.check.starts_with("piola_affine")) {
      ++affine;
      EXPECT_LE(row.value, 1e-10);
    }
    if (row.check == "det_ratio") {
      ++det;
      EXPECT_GE(row.value, 3.5);
      EXPECT_LE(row.value, 4.5);
    }
    if (row.check == "derivative_identity") {
      ++identity;
      EXPECT_LE(row.value, 1e-6);
    }
  }
  EXPECT_GT(affine, 0);
  EXPECT_GT(det, 0);
  EXPECT_EQ(identity, 1);
  std::ostringstream out;
  verify::write_suite(out, r);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "check,spacing,tau,value,lo,hi,pass");
}

TEST(Suite, DroppingBoundaryTermFails) {
  verify::SuiteOptions o;
  o.boundary_term = false;
  o.stefan_directions = 0;
  EXPECT_FALSE(verify::shape_calculus_suite(o).all_pass());
}
