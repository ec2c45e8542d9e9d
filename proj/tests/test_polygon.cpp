#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ldgcurve/polygon.hpp"

using namespace ldgcurve;

namespace {

constexpr double pi = std::numbers::pi;

auto square(double x0, double y0, double s) -> Polygon {
  return Polygon({{x0, y0}, {x0 + s, y0}, {x0 + s, y0 + s}, {x0, y0 + s}});
}

// Star-shaped polygon with random radii around c.
auto random_star(std::mt19937_64& rng, int n, Vec2 c) -> Polygon {
  std::uniform_real_distribution<double> r(0.5, 1.5);
  std::vector<Vec2> v;
  for (int i = 0; i < n; ++i) {
    const double t = 2 * pi * i / n;
    const double rad = r(rng);
    v.emplace_back(c.x() + rad * std::cos(t), c.y() + rad * std::sin(t));
  }
  return Polygon(v);
}

// Sutherland-Hodgman: clip a polygon against a convex counter-clockwise polygon.
auto clip_convex(std::vector<Vec2> subject, const std::vector<Vec2>& clip) -> std::vector<Vec2> {
  for (std::size_t i = 0; i < clip.size() && !subject.empty(); ++i) {
    const Vec2 a = clip[i];
    const Vec2 b = clip[(i + 1) % clip.size()];
    const auto side = [&](const Vec2& p) { return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x()); };
    std::vector<Vec2> out;
    for (std::size_t j = 0; j < subject.size(); ++j) {
      const Vec2 p = subject[j];
      const Vec2 q = subject[(j + 1) % subject.size()];
      const double sp = side(p);
      const double sq = side(q);
      if (sp >= 0) { out.push_back(p); }
      if ((sp >= 0) != (sq >= 0)) { out.push_back(p + (q - p) * (sp / (sp - sq))); }
    }
    subject = std::move(out);
  }
  return subject;
}

auto regular(int n, Vec2 c, double r, double phase) -> Polygon {
  std::vector<Vec2> v;
  for (int i = 0; i < n; ++i) {
    const double t = phase + 2 * pi * i / n;
    v.emplace_back(c.x() + r * std::cos(t), c.y() + r * std::sin(t));
  }
  return Polygon(v);
}

}  // namespace

TEST(Orient, SignsAndDegenerateInput) {
  EXPECT_EQ(orient2d({0, 0}, {1, 0}, {0, 1}), 1);
  EXPECT_EQ(orient2d({0, 0}, {0, 1}, {1, 0}), -1);
  EXPECT_EQ(orient2d({0, 0}, {1, 1}, {2, 2}), 0);
  // Nearly collinear points that naive double arithmetic misjudges.
  const Vec2 a(0.5, 0.5);
  const Vec2 b(12.0, 12.0);
  const Vec2 c(24.0, 24.0);
  EXPECT_EQ(orient2d(a, b, c), 0);
  EXPECT_EQ(orient2d(a, b, Vec2(24.0, std::nextafter(24.0, 25.0))), 1);
}

TEST(PolygonBasics, AreaAndOrientation) {
  EXPECT_NEAR(square(0, 0, 1).area(), 1.0, 1e-15);
  const Polygon cw({{0, 0}, {0, 2}, {3, 2}, {3, 0}});
  EXPECT_TRUE(cw.was_clockwise());
  EXPECT_NEAR(cw.area(), 6.0, 1e-15);
  EXPECT_THROW(Polygon({{0, 0}, {1, 0}}), GeometryError);
  EXPECT_THROW(Polygon({{0, 0}, {1, 0}, {0, NAN}}), GeometryError);
  const Vec2 c = centroid(square(2, -1, 2));
  EXPECT_NEAR(c.x(), 3.0, 1e-15);
  EXPECT_NEAR(c.y(), 0.0, 1e-15);
}

TEST(PolygonBasics, Simplicity) {
  EXPECT_TRUE(is_simple(square(0, 0, 1)));
  EXPECT_FALSE(is_simple(Polygon({{0, 0}, {1, 1}, {1, 0}, {0, 1}})));  // bow tie
  EXPECT_FALSE(is_simple(Polygon({{0, 0}, {2, 0}, {1, 0}, {1, 1}})));  // folds back on an edge
}

TEST(ManifoldDistance, IdenticalIsZero) {
  std::mt19937_64 rng(11);
  const Polygon p = random_star(rng, 50, {0, 0});
  EXPECT_NEAR(manifold_distance(p, p).value, 0.0, 1e-13);
}

TEST(ManifoldDistance, ShiftedUnitSquares) {
  const auto d = manifold_distance(square(0, 0, 1), square(0.5, 0, 1));
  EXPECT_NEAR(d.value, 1.0, 1e-14);
  EXPECT_NEAR(d.intersection, 0.5, 1e-14);
  EXPECT_FALSE(d.oracle_fallback);
  EXPECT_NEAR(manifold_distance(square(0, 0, 1), square(3, 3, 1)).value, 2.0, 1e-14);  // disjoint
}

TEST(ManifoldDistance, SymmetricAndBoundedByAreaDifference) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const Polygon a = random_star(rng, 30, {0, 0});
    const Polygon b = random_star(rng, 40, {0.2, -0.1});
    const double ab = manifold_distance(a, b).value;
    EXPECT_NEAR(ab, manifold_distance(b, a).value, 1e-12);
    EXPECT_GE(ab, std::abs(a.area() - b.area()) - 1e-12);
    EXPECT_LE(ab, a.area() + b.area() + 1e-12);
  }
}

TEST(ManifoldDistance, TinyDisplacementIsPositive) {
  const Polygon a = regular(64, {0, 0}, 1.0, 0.0);
  const Polygon b = regular(64, {1e-9, 0}, 1.0, 0.0);
  const double d = manifold_distance(a, b).value;
  EXPECT_GT(d, 0.0);
  // Thin crescents: about 2 * diameter * shift.
  EXPECT_NEAR(d, 4e-9, 2e-10);
}

TEST(ManifoldDistance, NonSimpleInputIsRejected) {
  const Polygon bow({{0, 0}, {1, 1}, {1, 0}, {0, 1}});
  EXPECT_THROW(manifold_distance(bow, square(0, 0, 1)), GeometryError);
  EXPECT_THROW(manifold_distance(square(0, 0, 1), bow), GeometryError);
}

TEST(ManifoldDistance, MatchesConvexClipping) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 50; ++i) {
    const Polygon a = regular(7 + i % 5, {u(rng), u(rng)}, 1.0, u(rng));
    const Polygon b = regular(9 + i % 3, {u(rng), u(rng)}, 0.8, u(rng));
    const double inter = shoelace_area(clip_convex(a.vertices(), b.vertices()));
    const double expected = a.area() + b.area() - 2 * inter;
    EXPECT_NEAR(manifold_distance(a, b).value, expected, 1e-12);
  }
}

TEST(ManifoldDistance, MatchesMonteCarloOnRandomStars) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int i = 0; i < 10; ++i) {
    const Polygon a = random_star(rng, 50, {0, 0});
    const Polygon b = random_star(rng, 50, {u(rng), u(rng)});
    const auto md = manifold_distance(a, b);
    const auto mc = monte_carlo_symmetric_difference(a, b, 1'000'000, 100 + i);
    EXPECT_LE(std::abs(md.value - mc.value), 4 * mc.standard_error) << "pair " << i;
  }
}
