#pragma once

// Closed planar polygons: orientation, shoelace area, simplicity test with exact orientation
// predicates, and the area of the symmetric difference / intersection of two polygons.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ldgcurve/error.hpp"
#include "ldgcurve/mesh_basis.hpp"

namespace ldgcurve {

// = Exact orientation =============================================================================
namespace detail {

inline void two_sum(double a, double b, double& x, double& y) {
  x = a + b;
  const double bv = x - a;
  const double av = x - bv;
  y = (a - av) + (b - bv);
}

inline void two_diff(double a, double b, double& x, double& y) {
  x = a - b;
  const double bv = a - x;
  const double av = x + bv;
  y = (a - av) + (bv - b);
}

inline void two_product(double a, double b, double& x, double& y) {
  x = a * b;
  y = std::fma(a, b, -x);
}

// Adds b to a nonoverlapping expansion e (increasing magnitude) in place.
inline void grow_expansion(std::vector<double>& e, double b) {
  double q = b;
  for (double& component : e) {
    double sum = 0.0;
    double err = 0.0;
    two_sum(q, component, sum, err);
    component = err;
    q = sum;
  }
  e.push_back(q);
}

inline auto orient2d_exact(const Vec2& a, const Vec2& b, const Vec2& c) -> double {
  // (b - a) x (c - a) with every difference and product carried exactly.
  double bx = 0, bxt = 0, by = 0, byt = 0, cx = 0, cxt = 0, cy = 0, cyt = 0;
  two_diff(b.x(), a.x(), bx, bxt);
  two_diff(b.y(), a.y(), by, byt);
  two_diff(c.x(), a.x(), cx, cxt);
  two_diff(c.y(), a.y(), cy, cyt);
  const double lhs[2] = {bx, bxt};
  const double lhs2[2] = {cy, cyt};
  const double rhs[2] = {by, byt};
  const double rhs2[2] = {cx, cxt};
  std::vector<double> e;
  e.reserve(24);
  for (double u : lhs) {
    for (double v : lhs2) {
      double p = 0, pe = 0;
      two_product(u, v, p, pe);
      grow_expansion(e, pe);
      grow_expansion(e, p);
    }
  }
  for (double u : rhs) {
    for (double v : rhs2) {
      double p = 0, pe = 0;
      two_product(u, v, p, pe);
      grow_expansion(e, -pe);
      grow_expansion(e, -p);
    }
  }
  for (auto it = e.rbegin(); it != e.rend(); ++it) {
    if (*it != 0.0) { return *it; }
  }
  return 0.0;
}

}  // namespace detail

// Sign of the turn a -> b -> c: > 0 counterclockwise, < 0 clockwise, 0 collinear (exact).
inline auto orient2d(const Vec2& a, const Vec2& b, const Vec2& c) -> int {
  const double detleft = (b.x() - a.x()) * (c.y() - a.y());
  const double detright = (b.y() - a.y()) * (c.x() - a.x());
  const double det = detleft - detright;
  const double bound = 3.3306690738754716e-16 * (std::abs(detleft) + std::abs(detright));
  if (det > bound) { return 1; }
  if (-det > bound) { return -1; }
  const double exact = detail::orient2d_exact(a, b, c);
  return (exact > 0.0) - (exact < 0.0);
}

// Closed segments [p1,p2] and [q1,q2] share at least one point.
inline auto segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) -> bool {
  const int o1 = orient2d(p1, p2, q1);
  const int o2 = orient2d(p1, p2, q2);
  const int o3 = orient2d(q1, q2, p1);
  const int o4 = orient2d(q1, q2, p2);
  auto on_segment = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    return std::min(a.x(), b.x()) <= c.x() && c.x() <= std::max(a.x(), b.x()) &&
           std::min(a.y(), b.y()) <= c.y() && c.y() <= std::max(a.y(), b.y());
  };
  if (o1 != o2 && o3 != o4) { return true; }
  if (o1 == 0 && on_segment(p1, p2, q1)) { return true; }
  if (o2 == 0 && on_segment(p1, p2, q2)) { return true; }
  if (o3 == 0 && on_segment(q1, q2, p1)) { return true; }
  if (o4 == 0 && on_segment(q1, q2, p2)) { return true; }
  return false;
}

inline auto shoelace_area(std::span<const Vec2> pts) -> double {
  const std::size_t n = pts.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = pts[i];
    const Vec2& b = pts[(i + 1) % n];
    s += a.x() * b.y() - a.y() * b.x();
  }
  return 0.5 * s;
}

// = Polygon =======================================================================================
// Closed polyline, last vertex implicitly joined to the first. Stored counterclockwise.
class Polygon {
 public:
  Polygon() = default;
  explicit Polygon(std::vector<Vec2> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.size() < 3) {
      throw GeometryError("polygon needs at least 3 vertices, got " + std::to_string(vertices_.size()));
    }
    for (const auto& v : vertices_) {
      if (!std::isfinite(v.x()) || !std::isfinite(v.y())) {
        throw GeometryError("polygon vertex is not finite");
      }
    }
    if (shoelace_area(vertices_) < 0.0) {
      std::reverse(vertices_.begin(), vertices_.end());
      reversed_ = true;
    }
  }

  [[nodiscard]] auto vertices() const noexcept -> const std::vector<Vec2>& { return vertices_; }
  [[nodiscard]] auto size() const noexcept -> std::size_t { return vertices_.size(); }
  [[nodiscard]] auto operator[](std::size_t i) const noexcept -> const Vec2& { return vertices_[i]; }
  // True when the input was clockwise and got reversed.
  [[nodiscard]] auto was_clockwise() const noexcept -> bool { return reversed_; }
  [[nodiscard]] auto area() const -> double { return shoelace_area(vertices_); }

  [[nodiscard]] auto diameter() const -> double {
    Vec2 lo = vertices_.front();
    Vec2 hi = vertices_.front();
    for (const auto& v : vertices_) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    return (hi - lo).norm();
  }

 private:
  std::vector<Vec2> vertices_;
  bool reversed_ = false;
};

// Area centroid of the enclosed region.
inline auto centroid(const Polygon& p) -> Vec2 {
  const auto& v = p.vertices();
  Vec2 c = Vec2::Zero();
  double a2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& s = v[i];
    const Vec2& t = v[(i + 1) % v.size()];
    const double w = s.x() * t.y() - t.x() * s.y();
    a2 += w;
    c += w * (s + t);
  }
  return c / (3.0 * a2);
}

// Drops consecutive (cyclically) vertices closer than rel_tol * diameter.
inline auto cleanup(const Polygon& poly, double rel_tol = 1e-13) -> Polygon {
  const double tol = rel_tol * poly.diameter();
  std::vector<Vec2> out;
  out.reserve(poly.size());
  for (const auto& v : poly.vertices()) {
    if (out.empty() || (v - out.back()).norm() > tol) { out.push_back(v); }
  }
  while (out.size() > 1 && (out.back() - out.front()).norm() <= tol) { out.pop_back(); }
  return Polygon(std::move(out));
}

namespace detail {

struct SweepEdge {
  double x0, y0, x1, y1;
  int owner;
  [[nodiscard]] auto y_at(double x) const noexcept -> double {
    if (x <= x0) { return y0; }
    if (x >= x1) { return y1; }
    return y0 + (y1 - y0) * ((x - x0) / (x1 - x0));
  }
};

inline void collect_edges(const Polygon& p, int owner, std::vector<SweepEdge>& edges, std::vector<double>& xs) {
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = p[i];
    const Vec2& b = p[(i + 1) % n];
    xs.push_back(a.x());
    if (a.x() == b.x()) { continue; }
    if (a.x() < b.x()) {
      edges.push_back({a.x(), a.y(), b.x(), b.y(), owner});
    } else {
      edges.push_back({b.x(), b.y(), a.x(), a.y(), owner});
    }
  }
}

struct OverlapAreas {
  double symmetric_difference = 0.0;
  double intersection = 0.0;
};

// Vertical slab decomposition. Inside each slab the active edges are straight lines; the slab
// is split further at every crossing so that the vertical order of the edges is fixed and each
// gap between consecutive edges is an exact trapezoid.
inline auto overlap_areas(const Polygon& a, const Polygon& b) -> OverlapAreas {
  std::vector<SweepEdge> edges;
  std::vector<double> xs;
  edges.reserve(a.size() + b.size());
  xs.reserve(a.size() + b.size());
  collect_edges(a, 0, edges, xs);
  collect_edges(b, 1, edges, xs);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(edges.begin(), edges.end(), [](const SweepEdge& e, const SweepEdge& f) { return e.x0 < f.x0; });

  OverlapAreas out;
  std::vector<const SweepEdge*> active;
  std::vector<double> cuts;
  struct Slice {
    double ylo, yhi, ymid;
    int owner;
  };
  std::vector<Slice> order;
  std::size_t next = 0;

  for (std::size_t s = 0; s + 1 < xs.size(); ++s) {
    const double xa = xs[s];
    const double xb = xs[s + 1];
    std::erase_if(active, [xa](const SweepEdge* e) { return e->x1 <= xa; });
    while (next < edges.size() && edges[next].x0 <= xa) {
      if (edges[next].x1 > xa) { active.push_back(&edges[next]); }
      ++next;
    }
    if (active.empty()) { continue; }

    cuts.clear();
    cuts.push_back(xa);
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t k = i + 1; k < active.size(); ++k) {
        const double dl = active[i]->y_at(xa) - active[k]->y_at(xa);
        const double dr = active[i]->y_at(xb) - active[k]->y_at(xb);
        if ((dl < 0.0 && dr > 0.0) || (dl > 0.0 && dr < 0.0)) {
          const double xc = xa + (xb - xa) * (dl / (dl - dr));
          if (xc > xa && xc < xb) { cuts.push_back(xc); }
        }
      }
    }
    cuts.push_back(xb);
    std::sort(cuts.begin(), cuts.end());

    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double u = cuts[c];
      const double v = cuts[c + 1];
      if (v <= u) { continue; }
      const double m = 0.5 * (u + v);
      order.clear();
      for (const auto* e : active) { order.push_back({e->y_at(u), e->y_at(v), e->y_at(m), e->owner}); }
      std::sort(order.begin(), order.end(), [](const Slice& p, const Slice& q) { return p.ymid < q.ymid; });
      bool in_a = false;
      bool in_b = false;
      const double w = 0.5 * (v - u);
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        if (order[i].owner == 0) {
          in_a = !in_a;
        } else {
          in_b = !in_b;
        }
        if (!in_a && !in_b) { continue; }
        const double gap = ((order[i + 1].ylo - order[i].ylo) + (order[i + 1].yhi - order[i].yhi)) * w;
        if (in_a != in_b) {
          out.symmetric_difference += gap;
        } else {
          out.intersection += gap;
        }
      }
    }
  }
  return out;
}

}  // namespace detail

// No two non-adjacent edges touch and adjacent edges meet only at their shared vertex.
inline auto is_simple(const Polygon& p) -> bool {
  const std::size_t n = p.size();
  // Duplicate vertices.
  std::vector<Vec2> sorted(p.vertices());
  std::sort(sorted.begin(), sorted.end(), [](const Vec2& u, const Vec2& v) {
    return u.x() < v.x() || (u.x() == v.x() && u.y() < v.y());
  });
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    if (sorted[i] == sorted[i + 1]) { return false; }
  }

  struct Edge {
    double x0, x1;
    std::size_t index;
  };
  std::vector<Edge> edges(n);
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = p[i];
    const Vec2& b = p[(i + 1) % n];
    edges[i] = {std::min(a.x(), b.x()), std::max(a.x(), b.x()), i};
    xs[i] = a.x();
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(edges.begin(), edges.end(), [](const Edge& e, const Edge& f) { return e.x0 < f.x0; });

  auto adjacent = [n](std::size_t i, std::size_t k) { return (i + 1) % n == k || (k + 1) % n == i; };
  std::vector<const Edge*> active;
  std::size_t next = 0;
  // Closed slabs [xs[s], xs[s+1]]; every intersecting pair is active together in one of them.
  const std::size_t slabs = xs.size() == 1 ? 1 : xs.size() - 1;
  for (std::size_t s = 0; s < slabs; ++s) {
    const double xa = xs[s];
    const double xb = xs.size() == 1 ? xs[0] : xs[s + 1];
    std::erase_if(active, [xa](const Edge* e) { return e->x1 < xa; });
    while (next < edges.size() && edges[next].x0 <= xb) { active.push_back(&edges[next++]); }
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t k = i + 1; k < active.size(); ++k) {
        const std::size_t ei = active[i]->index;
        const std::size_t ek = active[k]->index;
        if (std::max(active[i]->x0, active[k]->x0) > std::min(active[i]->x1, active[k]->x1)) { continue; }
        const Vec2& p1 = p[ei];
        const Vec2& p2 = p[(ei + 1) % n];
        const Vec2& q1 = p[ek];
        const Vec2& q2 = p[(ek + 1) % n];
        if (adjacent(ei, ek)) {
          if (n == 3) { continue; }
          // Shared vertex; any other contact means the edges fold back onto each other.
          const bool i_first = (ei + 1) % n == ek;
          const Vec2& shared = i_first ? p2 : q2;
          const Vec2& a_far = i_first ? p1 : q1;
          const Vec2& b_far = i_first ? q2 : p2;
          if (orient2d(a_far, shared, b_far) == 0 && (a_far - shared).dot(b_far - shared) > 0.0) {
            return false;
          }
          continue;
        }
        if (segments_intersect(p1, p2, q1, q2)) { return false; }
      }
    }
  }
  return true;
}

// Area of the symmetric difference and of the intersection of the enclosed regions.
inline auto overlap_areas(const Polygon& a, const Polygon& b) -> detail::OverlapAreas {
  return detail::overlap_areas(a, b);
}

// = Monte-Carlo oracle ============================================================================
inline auto point_in_polygon(const Polygon& p, const Vec2& pt) -> bool {
  bool inside = false;
  const std::size_t n = p.size();
  for (std::size_t i = 0, k = n - 1; i < n; k = i++) {
    const Vec2& a = p[i];
    const Vec2& b = p[k];
    if ((a.y() > pt.y()) != (b.y() > pt.y())) {
      const double x = a.x() + (pt.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (pt.x() < x) { inside = !inside; }
    }
  }
  return inside;
}

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

// Symmetric-difference area by uniform sampling of the joint bounding box.
inline auto monte_carlo_symmetric_difference(const Polygon& a, const Polygon& b, std::size_t samples,
                                             std::uint64_t seed = 1) -> MonteCarloEstimate {
  Vec2 lo = a[0];
  Vec2 hi = a[0];
  for (const auto* p : {&a, &b}) {
    for (const auto& v : p->vertices()) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo.x(), hi.x());
  std::uniform_real_distribution<double> uy(lo.y(), hi.y());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Vec2 pt(ux(rng), uy(rng));
    if (point_in_polygon(a, pt) != point_in_polygon(b, pt)) { ++hits; }
  }
  const double box = (hi.x() - lo.x()) * (hi.y() - lo.y());
  const double frac = static_cast<double>(hits) / static_cast<double>(samples);
  return {box * frac, box * std::sqrt(frac * (1.0 - frac) / static_cast<double>(samples))};
}

// = Manifold distance =============================================================================
struct ManifoldDistance {
  double value = 0.0;
  double area_a = 0.0;
  double area_b = 0.0;
  double intersection = 0.0;
  bool oracle_fallback = false;  // value came from the Monte-Carlo estimator
};

struct ManifoldDistanceOptions {
  double cleanup_tolerance = 1e-13;
  std::size_t fallback_samples = 4'000'000;
};

// |Omega_a| + |Omega_b| - 2 |Omega_a ∩ Omega_b| for simple polygons.
inline auto manifold_distance(const Polygon& a, const Polygon& b, const ManifoldDistanceOptions& opts = {})
    -> ManifoldDistance {
  const Polygon ca = cleanup(a, opts.cleanup_tolerance);
  const Polygon cb = cleanup(b, opts.cleanup_tolerance);
  if (!is_simple(ca)) { throw GeometryError("manifold_distance: first polygon is not simple"); }
  if (!is_simple(cb)) { throw GeometryError("manifold_distance: second polygon is not simple"); }

  ManifoldDistance out;
  out.area_a = ca.area();
  out.area_b = cb.area();
  const auto areas = detail::overlap_areas(ca, cb);
  out.intersection = areas.intersection;
  out.value = areas.symmetric_difference;

  // The sweep never rejects input; an inconsistent split is the only failure signal.
  const double scale = out.area_a + out.area_b;
  const double consistency = std::abs(out.area_a + out.area_b - 2.0 * out.intersection - out.value);
  if (!std::isfinite(out.value) || consistency > 1e-9 * scale) {
    const auto mc = monte_carlo_symmetric_difference(ca, cb, opts.fallback_samples);
    out.value = mc.value;
    out.intersection = 0.5 * (out.area_a + out.area_b - mc.value);
    out.oracle_fallback = true;
  }
  return out;
}

}  // namespace ldgcurve
