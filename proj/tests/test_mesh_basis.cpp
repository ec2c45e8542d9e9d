#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ldgcurve/mesh_basis.hpp"

using namespace ldgcurve;

namespace {

constexpr double pi = std::numbers::pi;

// Max pointwise error of a scalar field against f on a dense sample.
auto max_error(const DGScalarField& u, const ScalarFunction& f, int per_cell = 40) -> double {
  double e = 0.0;
  for (int j = 0; j < u.mesh().cells(); ++j) {
    for (int i = 0; i <= per_cell; ++i) {
      const double x = -1.0 + 2.0 * i / per_cell;
      const double rho = u.mesh().node(j) + 0.5 * u.mesh().h() * (x + 1.0);
      e = std::max(e, std::abs(u.eval_local(j, x) - f(rho)));
    }
  }
  return e;
}

// L2 error with an independent 12-point rule.
auto l2_error(const DGScalarField& u, const ScalarFunction& f) -> double {
  const auto rule = gauss_rule(12);
  double s = 0.0;
  for (int j = 0; j < u.mesh().cells(); ++j) {
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double rho = u.mesh().node(j) + 0.5 * u.mesh().h() * (rule.nodes[q] + 1.0);
      const double d = u.eval_local(j, rule.nodes[q]) - f(rho);
      s += 0.5 * u.mesh().h() * rule.weights[q] * d * d;
    }
  }
  return std::sqrt(s);
}

}  // namespace

TEST(Mesh, FiveCells) {
  const Mesh m = make_mesh(5);
  EXPECT_DOUBLE_EQ(m.h(), 0.2);
  const auto nodes = m.nodes();
  ASSERT_EQ(nodes.size(), 6u);
  const double expected[] = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  for (std::size_t i = 0; i < 6; ++i) { EXPECT_NEAR(nodes[i], expected[i], 1e-15); }
}

TEST(Mesh, TooFewCellsIsAnError) {
  EXPECT_THROW(make_mesh(2), MeshError);
  EXPECT_THROW(make_mesh(0), MeshError);
  EXPECT_NO_THROW(make_mesh(3));
}

TEST(Mesh, EightyCells) { EXPECT_DOUBLE_EQ(make_mesh(80).h(), 0.0125); }

TEST(Mesh, NodesIncreaseAndIndicesWrap) {
  for (int N : {3, 7, 80, 641}) {
    const Mesh m(N);
    const auto nodes = m.nodes();
    for (std::size_t i = 1; i < nodes.size(); ++i) { EXPECT_GT(nodes[i], nodes[i - 1]); }
    EXPECT_EQ(nodes.front(), 0.0);
    EXPECT_EQ(nodes.back(), 1.0);
    EXPECT_NEAR(m.h() * N, 1.0, 1e-15);
    EXPECT_EQ(m.wrap(N), 0);
    EXPECT_EQ(m.wrap(-1), N - 1);
    EXPECT_EQ(m.wrap(2 * N + 3), 3 % N);
  }
}

TEST(Mesh, LocateMapsIntoReferenceCell) {
  const Mesh m(4);
  auto [j, x] = m.locate(0.375);
  EXPECT_EQ(j, 1);
  EXPECT_NEAR(x, 0.0, 1e-15);
  std::tie(j, x) = m.locate(1.0);
  EXPECT_EQ(j, 3);
  EXPECT_NEAR(x, 1.0, 1e-15);
  std::tie(j, x) = m.locate(1.125);
  EXPECT_EQ(j, 0);
  EXPECT_NEAR(x, 0.0, 1e-15);
}

TEST(Basis, ClosedFormValues) {
  const auto v = basis_eval(Basis(1), 0.0);
  EXPECT_NEAR(v.values[0], std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(v.values[1], 0.0, 1e-15);
  EXPECT_NEAR(v.derivatives[0], 0.0, 1e-15);
  EXPECT_NEAR(v.derivatives[1], std::sqrt(1.5), 1e-15);

  const auto r = basis_eval(Basis(1), 1.0);
  EXPECT_NEAR(r.values[0], std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(r.values[1], std::sqrt(1.5), 1e-15);

  EXPECT_NEAR(basis_eval(Basis(2), -1.0).values[2], std::sqrt(2.5), 1e-14);
}

TEST(Basis, DegreeRange) {
  EXPECT_THROW(Basis(0), InvalidArgument);
  EXPECT_THROW(Basis(5), InvalidArgument);
  for (int k = 1; k <= 4; ++k) { EXPECT_EQ(Basis(k).size(), k + 1); }
}

TEST(Basis, DerivativesMatchFiniteDifferences) {
  const Basis b(4);
  const double eps = 1e-6;
  for (double x : {-0.9, -0.3, 0.1, 0.77}) {
    const auto v = b.eval(x);
    const auto p = b.eval(x + eps);
    const auto m = b.eval(x - eps);
    for (int a = 0; a < 5; ++a) {
      EXPECT_NEAR(v.derivatives[a], (p.values[a] - m.values[a]) / (2 * eps), 1e-8);
    }
  }
}

TEST(Basis, OrthonormalUnderExactRule) {
  for (int k = 1; k <= 4; ++k) {
    const BasisTable t(Basis(k), k + 1);
    for (int a = 0; a < t.nb; ++a) {
      for (int b = 0; b < t.nb; ++b) {
        double s = 0.0;
        for (std::size_t q = 0; q < t.points(); ++q) { s += t.rule.weights[q] * t.at(q, a) * t.at(q, b); }
        EXPECT_NEAR(s, a == b ? 1.0 : 0.0, 1e-13) << "k=" << k << " a=" << a << " b=" << b;
      }
    }
  }
}

TEST(Gauss, SmallRules) {
  const auto r1 = gauss_rule(1);
  ASSERT_EQ(r1.size(), 1u);
  EXPECT_NEAR(r1.nodes[0], 0.0, 1e-15);
  EXPECT_NEAR(r1.weights[0], 2.0, 1e-15);

  const auto r2 = gauss_rule(2);
  ASSERT_EQ(r2.size(), 2u);
  EXPECT_NEAR(std::abs(r2.nodes[0]), 1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(r2.nodes[0], -r2.nodes[1], 1e-15);
  EXPECT_NEAR(r2.weights[0], 1.0, 1e-15);
  EXPECT_NEAR(r2.weights[1], 1.0, 1e-15);

  const auto r3 = gauss_rule(3);
  double s = 0.0;
  for (std::size_t q = 0; q < 3; ++q) { s += r3.weights[q] * std::pow(r3.nodes[q], 4); }
  EXPECT_NEAR(s, 0.4, 1e-14);
}

TEST(Gauss, RangeChecked) {
  EXPECT_THROW(gauss_rule(0), InvalidArgument);
  EXPECT_THROW(gauss_rule(21), InvalidArgument);
}

TEST(Gauss, ExactOnMonomialsAndWeightsSumToTwo) {
  for (int n = 1; n <= 20; ++n) {
    const auto r = gauss_rule(n);
    double wsum = 0.0;
    for (double w : r.weights) {
      EXPECT_GT(w, 0.0);
      wsum += w;
    }
    EXPECT_NEAR(wsum, 2.0, 1e-14) << "n=" << n;
    for (int d = 0; d <= 2 * n - 1; ++d) {
      double s = 0.0;
      for (std::size_t q = 0; q < r.size(); ++q) { s += r.weights[q] * std::pow(r.nodes[q], d); }
      const double exact = d % 2 == 1 ? 0.0 : 2.0 / (d + 1);
      EXPECT_NEAR(s, exact, 1e-13) << "n=" << n << " degree " << d;
    }
  }
}

TEST(Projection, ReproducesConstantsAndLines) {
  const Mesh m(7);
  for (int k = 1; k <= 4; ++k) {
    const auto c = l2_project([](double) { return Vec2(2.0, 1.0); }, m, Basis(k));
    for (double rho : {0.0, 0.13, 0.5, 0.999}) {
      EXPECT_NEAR(c(rho).x(), 2.0, 1e-14);
      EXPECT_NEAR(c(rho).y(), 1.0, 1e-14);
    }
    const auto line = l2_project([](double r) { return r; }, m, Basis(k));
    EXPECT_LE(max_error(line, [](double r) { return r; }), 1e-14);
  }
}

TEST(Projection, SineErrorDropsByEightAtDegreeTwo) {
  const auto f = [](double r) { return std::sin(2 * pi * r); };
  const double e20 = max_error(l2_project(f, Mesh(20), Basis(2)), f);
  const double e40 = max_error(l2_project(f, Mesh(40), Basis(2)), f);
  EXPECT_NEAR(e20 / e40, 8.0, 1.0);
}

TEST(Projection, Idempotent) {
  const auto f = [](double r) { return std::exp(std::cos(2 * pi * r)); };
  for (int k = 1; k <= 4; ++k) {
    const auto u = l2_project(f, Mesh(9), Basis(k));
    const auto v = l2_project([&](double r) { return u(r); }, Mesh(9), Basis(k));
    // rho at cell ends is the only ambiguity and Gauss points avoid it.
    for (std::size_t i = 0; i < u.coeffs().size(); ++i) { EXPECT_NEAR(u.coeffs()[i], v.coeffs()[i], 1e-13); }
  }
}

TEST(Projection, ConvergesAtOrderKPlusOne) {
  const auto f = [](double r) { return std::sin(2 * pi * r) + 0.3 * std::cos(6 * pi * r); };
  for (int k = 1; k <= 4; ++k) {
    const double e1 = l2_error(l2_project(f, Mesh(16), Basis(k)), f);
    const double e2 = l2_error(l2_project(f, Mesh(32), Basis(k)), f);
    EXPECT_NEAR(std::log2(e1 / e2), k + 1.0, 0.2) << "k=" << k;
  }
}

TEST(Fields, TracesDifferAcrossInterfaces) {
  const Mesh m(4);
  DGScalarField u(m, Basis(1));
  for (int j = 0; j < 4; ++j) { u.coeff(j, 0) = std::sqrt(2.0) * j; }  // value j on cell j
  EXPECT_NEAR(u.trace_minus(1), 0.0, 1e-15);
  EXPECT_NEAR(u.trace_plus(1), 1.0, 1e-15);
  EXPECT_NEAR(u.trace_minus(0), 3.0, 1e-15);  // periodic wrap
  EXPECT_NEAR(u.trace_plus(4), 0.0, 1e-15);
}
