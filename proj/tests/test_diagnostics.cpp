#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "ldgcurve/curves.hpp"
#include "ldgcurve/diagnostics.hpp"
#include "ldgcurve/flow_solver.hpp"

using namespace ldgcurve;

namespace {

constexpr double pi = std::numbers::pi;

auto circle(double rho) -> Vec2 { return {std::cos(2 * pi * rho), std::sin(2 * pi * rho)}; }
auto circle_d(double rho) -> Vec2 { return {-2 * pi * std::sin(2 * pi * rho), 2 * pi * std::cos(2 * pi * rho)}; }

// State with X and q projected from analytic position and derivative.
auto analytic_state(const CurveFunction& X, const CurveFunction& dX, int N, int k) -> CurveState {
  const Mesh mesh(N);
  const Basis basis(k);
  CurveState s(mesh, basis);
  s.X = l2_project(X, mesh, basis, 12);
  s.q = l2_project(dX, mesh, basis, 12);
  return s;
}

// Continuous piecewise-quadratic interpolant of f through the nodes and cell midpoints.
auto quadratic_interpolant(const CurveFunction& f, const Mesh& mesh) -> CurveFunction {
  return [f, mesh](double rho) {
    auto [j, x] = mesh.locate(rho);
    const double a = mesh.node(j);
    const Vec2 l = f(a);
    const Vec2 m = f(a + 0.5 * mesh.h());
    const Vec2 r = f(a + mesh.h());
    return Vec2(0.5 * x * (x - 1) * l + (1 - x * x) * m + 0.5 * x * (x + 1) * r);
  };
}

auto square_state() -> CurveState {
  // The unit square traversed counter-clockwise, one side per cell.
  const Mesh mesh(4);
  const Vec2 corners[] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const auto f = [&](double rho) {
    auto [j, x] = mesh.locate(rho);
    return Vec2(0.5 * (1 - x) * corners[j] + 0.5 * (1 + x) * corners[(j + 1) % 4]);
  };
  FlowParams p;
  return init_state(f, mesh, Basis(1), p);
}

}  // namespace

TEST(Energy, CirclePerimeter) {
  const auto s = analytic_state(circle, circle_d, 80, 4);
  const auto e = discrete_energy(s, AnisotropyModel::isotropic(), 1.0 / s.mesh().h(), 12);
  EXPECT_NEAR(e.surface, 2 * pi, 1e-10);
  // Projection jumps at k = 4 are O(h^5).
  EXPECT_LE(e.penalty, 1e-15);
  EXPECT_DOUBLE_EQ(e.total, e.surface + e.penalty);
}

TEST(Energy, EllipsePerimeterAgainstAdaptiveQuadrature) {
  const double exact = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [](double r) { return 2 * pi * std::sqrt(4 * std::sin(2 * pi * r) * std::sin(2 * pi * r) +
                                               std::cos(2 * pi * r) * std::cos(2 * pi * r)); },
      0.0, 1.0, 15, 1e-14);
  EXPECT_NEAR(exact, 9.688448220547675, 1e-12);
  FlowParams p;
  const auto s = init_state(initial_curve(CurveKind::Ellipse).function(), Mesh(80), Basis(3), p);
  EXPECT_NEAR(discrete_energy(s, p.anisotropy, 0.0).surface, exact, 1e-6 * exact);
}

TEST(Energy, AnisotropicDensityOnTheCircle) {
  // On the unit circle theta = phi + pi/2 and the weighted length is the integral of gamma.
  const auto s = analytic_state(circle, circle_d, 80, 4);
  const auto m = AnisotropyModel::lfold(0.05, 4);
  // int_0^{2 pi} (1 + beta cos(4 theta)) dtheta = 2 pi
  EXPECT_NEAR(discrete_energy(s, m, 0.0, 12).surface, 2 * pi, 1e-9);
  const auto m3 = AnisotropyModel::custom([](double t) { return 2.0 + std::sin(t) * std::sin(t); },
                                          [](double t) { return std::sin(2 * t); },
                                          [](double t) { return 2 * std::cos(2 * t); });
  EXPECT_NEAR(discrete_energy(s, m3, 0.0, 12).surface, 5 * pi, 1e-9);
}

TEST(Energy, PenaltyVanishesOnContinuousCurves) {
  const auto s = square_state();
  EXPECT_LE(discrete_energy(s, AnisotropyModel::isotropic(), 4.0).penalty, 1e-20);
  EXPECT_NEAR(discrete_energy(s, AnisotropyModel::isotropic(), 4.0).surface, 4.0, 1e-14);
}

TEST(Energy, PenaltyMeasuresJumps) {
  auto s = square_state();
  s.X[0].coeff(1, 0) += 0.1 * std::sqrt(2.0);  // shifts cell 1 by 0.1 in x: two jumps of 0.1
  EXPECT_NEAR(discrete_energy(s, AnisotropyModel::isotropic(), 3.0).penalty, 0.5 * 3.0 * 2 * 0.01, 1e-14);
}

TEST(Area, Examples) {
  EXPECT_NEAR(enclosed_area(square_state()), 1.0, 1e-14);
  FlowParams p;
  const auto c = init_state(circle, Mesh(40), Basis(4), p);
  EXPECT_NEAR(enclosed_area(c), pi, 1e-6);
  // Interface jumps are left out of the sum, so the projected ellipse is off by O(h^2) for k <= 2.
  const auto e = init_state(initial_curve(CurveKind::Ellipse).function(), Mesh(80), Basis(1), p);
  EXPECT_NEAR(enclosed_area(e), 2 * pi, 3e-3);
}

TEST(Area, ProjectionGapIsSecondOrder) {
  FlowParams p;
  const auto f = initial_curve(CurveKind::Ellipse).function();
  for (int k : {1, 2}) {
    const double e1 = std::abs(enclosed_area(init_state(f, Mesh(40), Basis(k), p)) - 2 * pi);
    const double e2 = std::abs(enclosed_area(init_state(f, Mesh(80), Basis(k), p)) - 2 * pi);
    EXPECT_NEAR(std::log2(e1 / e2), 2.0, 0.1) << "k=" << k;
  }
}

TEST(Area, TranslationShiftsByTheJumpSum) {
  // sum_j int (x + c) dy = A + c sum_j (y(right) - y(left)) = A - c sum_i [y]_i
  FlowParams p;
  const auto s = init_state(initial_curve(CurveKind::Flower).function(), Mesh(20), Basis(1), p);
  CurveState t = s;
  for (int j = 0; j < 20; ++j) { t.X[0].coeff(j, 0) += std::sqrt(2.0) * 0.7; }
  double jumps = 0.0;
  for (int i = 0; i < 20; ++i) { jumps += s.X.trace_plus(i).y() - s.X.trace_minus(i).y(); }
  EXPECT_NEAR(enclosed_area(t), enclosed_area(s) - 0.7 * jumps, 1e-13);
}

TEST(Area, ConvergesToShoelaceOfSamplesAtSecondOrder) {
  const Mesh mesh(12);
  FlowParams p;
  const auto s = init_state(quadratic_interpolant(circle, mesh), mesh, Basis(2), p);
  const double A = enclosed_area(s);
  const double e1 = std::abs(sample_polygon(s, 8).area() - A);
  const double e2 = std::abs(sample_polygon(s, 17).area() - A);  // spacing halves: 9 -> 18 gaps
  EXPECT_NEAR(std::log2(e1 / e2), 2.0, 0.1);
}

TEST(MeshRatio, CircleIsUniform) {
  FlowParams p;
  EXPECT_NEAR(mesh_ratio(init_state(circle, Mesh(80), Basis(1), p)), 1.0, 1e-10);
}

TEST(MeshRatio, EllipseMatchesExactChords) {
  const int N = 80;
  FlowParams p;
  const auto f = initial_curve(CurveKind::Ellipse).function();
  const auto s = init_state(f, Mesh(N), Basis(3), p);
  double lo = 1e300;
  double hi = 0.0;
  for (int j = 0; j < N; ++j) {
    const double c = (f((j + 1.0) / N) - f(static_cast<double>(j) / N)).norm();
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  EXPECT_NEAR(mesh_ratio(s), hi / lo, 1e-6);
  EXPECT_NEAR(hi / lo, 2.0, 1e-2);
}

TEST(MeshRatio, InvariantUnderRigidMotions) {
  FlowParams p;
  const auto f = initial_curve(CurveKind::Flower).function();
  const auto g = [&](double r) {
    const Vec2 v = f(r);
    return Vec2(std::cos(0.3) * v.x() - std::sin(0.3) * v.y() + 5.0, std::sin(0.3) * v.x() + std::cos(0.3) * v.y() - 2.0);
  };
  EXPECT_NEAR(mesh_ratio(init_state(f, Mesh(40), Basis(2), p)), mesh_ratio(init_state(g, Mesh(40), Basis(2), p)), 1e-10);
}

TEST(MeshRatio, DegenerateCellIsAnError) {
  auto s = square_state();
  // Collapse cell 2 to a point.
  s.X[0].coeff(2, 1) = 0.0;
  s.X[1].coeff(2, 1) = 0.0;
  EXPECT_THROW(mesh_ratio(s), GeometryError);
}

TEST(Sampling, CountsAndInterfaceMidpoints) {
  FlowParams p;
  const auto s = init_state(initial_curve(CurveKind::Ellipse).function(), Mesh(5), Basis(2), p);
  const Polygon poly = sample_polygon(s);
  EXPECT_EQ(poly.size(), 5u * 301u);
  EXPECT_EQ(sample_parameters(Mesh(5)).size(), 5u * 301u);
  const Polygon small = sample_polygon(s, 4);
  ASSERT_EQ(small.size(), 25u);
  for (int j = 0; j < 5; ++j) {
    const Vec2 mid = 0.5 * (s.X.eval_local((j + 4) % 5, 1.0) + s.X.eval_local(j, -1.0));
    EXPECT_LE((small[5 * j] - mid).norm(), 1e-15);
  }
  EXPECT_THROW(sample_polygon(s, 1), InvalidArgument);
}

TEST(Sampling, ProjectedCircleVerticesNearTheCircle) {
  FlowParams p;
  const Polygon poly = sample_polygon(init_state(circle, Mesh(80), Basis(1), p));
  double dev = 0.0;
  for (const auto& v : poly.vertices()) { dev = std::max(dev, std::abs(v.norm() - 1.0)); }
  EXPECT_LE(dev, 1e-3);
}

TEST(TangentialVelocity, TranslationIsPurelyTangentialWhereAligned) {
  FlowParams p;
  const auto s = init_state(circle, Mesh(20), Basis(2), p);
  CurveState moved = s;
  const Vec2 c(1e-3, 0.0);
  for (int j = 0; j < 20; ++j) { moved.X[0].coeff(j, 0) += std::sqrt(2.0) * c.x(); }
  const auto vt = tangential_velocity(s, moved, 1e-3);
  // Velocity (1, 0); tangential component -sin(2 pi rho) on the circle.
  for (int j = 0; j < 20; ++j) {
    const double rho = (j + 0.5) / 20.0;
    EXPECT_NEAR(vt.eval_local(j, 0.0), -std::sin(2 * pi * rho), 1e-3);
  }
}

TEST(TangentialVelocity, VanishesForTheShrinkingCircle) {
  const double tau = 1e-3;
  const auto at = [](double t) {
    return analytic_state([t](double r) { return exact_circle(t, r); },
                          [t](double r) { return Vec2(std::sqrt(1 - 2 * t) * circle_d(r)); }, 80, 4);
  };
  const auto vt = tangential_velocity(at(0.1), at(0.1 + tau), tau, 12);
  double m = 0.0;
  for (double c : vt.coeffs()) { m = std::max(m, std::abs(c)); }
  EXPECT_LE(m, 1e-8);
}

TEST(TangentialVelocity, MeshMismatchIsAnError) {
  FlowParams p;
  const auto a = init_state(circle, Mesh(10), Basis(1), p);
  const auto b = init_state(circle, Mesh(12), Basis(1), p);
  EXPECT_THROW(tangential_velocity(a, b, 1e-3), InvalidArgument);
}

TEST(FieldSpread, Constant) {
  DGScalarField f(Mesh(4), Basis(2));
  for (int j = 0; j < 4; ++j) { f.coeff(j, 0) = std::sqrt(2.0) * 3.0; }
  EXPECT_NEAR(field_spread(f), 0.0, 1e-14);
  f.coeff(2, 0) = 0.0;
  EXPECT_NEAR(field_spread(f), 3.0, 1e-14);
}

TEST(Record, SplitAndAreaLoss) {
  FlowParams p;
  const auto s = init_state(initial_curve(CurveKind::Mikula).function(), Mesh(40), Basis(2), p);
  const double A0 = enclosed_area(s);
  const auto r = make_record(s, p.anisotropy, 40.0, A0);
  EXPECT_DOUBLE_EQ(r.Wc, r.W1 + r.W2);
  EXPECT_EQ(r.dA, 0.0);
  EXPECT_EQ(r.A, A0);
  EXPECT_GE(r.Psi, 1.0);
  const auto r2 = make_record(s, p.anisotropy, 40.0, 2 * A0);
  EXPECT_NEAR(r2.dA, -0.5, 1e-15);
}
