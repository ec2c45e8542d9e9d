#pragma once

// Periodic uniform mesh on [0,1], orthonormal Legendre basis on [-1,1], Gauss-Legendre
// quadrature and cellwise L2 projection into the broken polynomial spaces.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "ldgcurve/error.hpp"

namespace ldgcurve {

using Vec2 = Eigen::Vector2d;

// = Mesh ==========================================================================================
class Mesh {
 public:
  explicit Mesh(int cells) : cells_(cells) {
    if (cells < 3) {
      throw MeshError("mesh needs at least 3 cells, got " + std::to_string(cells));
    }
  }

  [[nodiscard]] auto cells() const noexcept -> int { return cells_; }
  [[nodiscard]] auto h() const noexcept -> double { return 1.0 / static_cast<double>(cells_); }
  // rho_{j+1/2} = j/N for j = 0..N
  [[nodiscard]] auto node(int j) const noexcept -> double {
    return static_cast<double>(j) / static_cast<double>(cells_);
  }
  [[nodiscard]] auto nodes() const -> std::vector<double> {
    std::vector<double> out(static_cast<std::size_t>(cells_) + 1);
    for (int j = 0; j <= cells_; ++j) { out[static_cast<std::size_t>(j)] = node(j); }
    return out;
  }
  // Periodic index wrap.
  [[nodiscard]] auto wrap(int j) const noexcept -> int { return ((j % cells_) + cells_) % cells_; }

  // Cell containing rho (rho is reduced mod 1); the right endpoint belongs to the last cell.
  [[nodiscard]] auto locate(double rho) const -> std::pair<int, double> {
    double r = rho - std::floor(rho);
    if (rho == 1.0) { r = 1.0; }
    int j = static_cast<int>(std::floor(r * cells_));
    if (j >= cells_) { j = cells_ - 1; }
    const double x = 2.0 * (r * cells_ - j) - 1.0;
    return {j, std::clamp(x, -1.0, 1.0)};
  }

  friend auto operator==(const Mesh&, const Mesh&) -> bool = default;

 private:
  int cells_;
};

inline auto make_mesh(int cells) -> Mesh { return Mesh(cells); }

// = Quadrature ====================================================================================
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  [[nodiscard]] auto size() const noexcept -> std::size_t { return nodes.size(); }
};

namespace detail {

// P_n(x) and P_n'(x) by the three-term recurrence.
inline auto legendre(int n, double x) -> std::pair<double, double> {
  double p0 = 1.0;
  double d0 = 0.0;
  if (n == 0) { return {p0, d0}; }
  double p1 = x;
  double d1 = 1.0;
  for (int m = 1; m < n; ++m) {
    const double p2 = ((2.0 * m + 1.0) * x * p1 - m * p0) / (m + 1.0);
    const double d2 = (m + 1.0) * p1 + x * d1;
    p0 = p1;
    p1 = p2;
    d0 = d1;
    d1 = d2;
  }
  return {p1, d1};
}

}  // namespace detail

// Gauss-Legendre rule with n points on [-1,1]; nodes by Newton iteration on P_n.
inline auto gauss_rule(int n) -> QuadratureRule {
  if (n < 1 || n > 20) {
    throw InvalidArgument("gauss_rule: point count must be in [1,20], got " + std::to_string(n));
  }
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      const auto [p, d] = detail::legendre(n, x);
      dp = d;
      const double dx = p / d;
      x -= dx;
      if (std::abs(dx) < 1e-15) { break; }
    }
    dp = detail::legendre(n, x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[lo] = -x;
    rule.nodes[hi] = x;
    rule.weights[lo] = w;
    rule.weights[hi] = w;
  }
  if (n % 2 == 1) { rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0; }
  return rule;
}

// = Basis =========================================================================================
struct BasisValues {
  std::vector<double> values;
  std::vector<double> derivatives;
};

// Orthonormalized Legendre polynomials phi_i = sqrt((2i+1)/2) P_i on [-1,1].
class Basis {
 public:
  explicit Basis(int degree) : degree_(degree) {
    if (degree < 1 || degree > 4) {
      throw InvalidArgument("polynomial degree must be in [1,4], got " + std::to_string(degree));
    }
  }

  [[nodiscard]] auto degree() const noexcept -> int { return degree_; }
  [[nodiscard]] auto size() const noexcept -> int { return degree_ + 1; }

  [[nodiscard]] auto eval(double x) const -> BasisValues {
    BasisValues out;
    out.values.resize(static_cast<std::size_t>(size()));
    out.derivatives.resize(static_cast<std::size_t>(size()));
    for (int i = 0; i <= degree_; ++i) {
      const auto [p, d] = detail::legendre(i, x);
      const double s = std::sqrt((2.0 * i + 1.0) / 2.0);
      out.values[static_cast<std::size_t>(i)] = s * p;
      out.derivatives[static_cast<std::size_t>(i)] = s * d;
    }
    return out;
  }

  friend auto operator==(const Basis&, const Basis&) -> bool = default;

 private:
  int degree_;
};

inline auto basis_eval(const Basis& basis, double x) -> BasisValues { return basis.eval(x); }

// Basis values tabulated at the nodes of a quadrature rule and at the two cell endpoints.
struct BasisTable {
  int nb = 0;
  QuadratureRule rule;
  std::vector<double> phi;   // phi[q * nb + a]
  std::vector<double> dphi;  // d/dx on the reference element
  std::vector<double> left;  // phi_a(-1)
  std::vector<double> right; // phi_a(+1)

  BasisTable(const Basis& basis, int quad_points) : nb(basis.size()), rule(gauss_rule(quad_points)) {
    const auto nq = rule.size();
    phi.resize(nq * static_cast<std::size_t>(nb));
    dphi.resize(nq * static_cast<std::size_t>(nb));
    for (std::size_t q = 0; q < nq; ++q) {
      const auto v = basis.eval(rule.nodes[q]);
      for (int a = 0; a < nb; ++a) {
        phi[q * nb + a] = v.values[static_cast<std::size_t>(a)];
        dphi[q * nb + a] = v.derivatives[static_cast<std::size_t>(a)];
      }
    }
    left = basis.eval(-1.0).values;
    right = basis.eval(1.0).values;
  }

  [[nodiscard]] auto points() const noexcept -> std::size_t { return rule.size(); }
  [[nodiscard]] auto at(std::size_t q, int a) const noexcept -> double { return phi[q * nb + a]; }
  [[nodiscard]] auto d_at(std::size_t q, int a) const noexcept -> double {
    return dphi[q * nb + a];
  }
};

inline auto default_quad_points(const Basis& basis) -> int { return basis.degree() + 3; }

// = DG fields =====================================================================================
class DGScalarField {
 public:
  DGScalarField(Mesh mesh, Basis basis)
      : mesh_(mesh),
        basis_(basis),
        coeffs_(static_cast<std::size_t>(mesh.cells() * basis.size()), 0.0) {}

  [[nodiscard]] auto mesh() const noexcept -> const Mesh& { return mesh_; }
  [[nodiscard]] auto basis() const noexcept -> const Basis& { return basis_; }
  [[nodiscard]] auto coeffs() noexcept -> std::vector<double>& { return coeffs_; }
  [[nodiscard]] auto coeffs() const noexcept -> const std::vector<double>& { return coeffs_; }

  [[nodiscard]] auto coeff(int cell, int a) const noexcept -> double {
    return coeffs_[static_cast<std::size_t>(cell * basis_.size() + a)];
  }
  [[nodiscard]] auto coeff(int cell, int a) noexcept -> double& {
    return coeffs_[static_cast<std::size_t>(cell * basis_.size() + a)];
  }

  // Value on cell `cell` at reference coordinate x in [-1,1].
  [[nodiscard]] auto eval_local(int cell, double x) const -> double {
    const auto v = basis_.eval(x);
    double s = 0.0;
    for (int a = 0; a < basis_.size(); ++a) { s += coeff(cell, a) * v.values[static_cast<std::size_t>(a)]; }
    return s;
  }
  // d/drho on cell `cell` at reference coordinate x.
  [[nodiscard]] auto derivative_local(int cell, double x) const -> double {
    const auto v = basis_.eval(x);
    double s = 0.0;
    for (int a = 0; a < basis_.size(); ++a) {
      s += coeff(cell, a) * v.derivatives[static_cast<std::size_t>(a)];
    }
    return s * 2.0 / mesh_.h();
  }
  [[nodiscard]] auto operator()(double rho) const -> double {
    const auto [j, x] = mesh_.locate(rho);
    return eval_local(j, x);
  }
  // Traces at interface rho_{i+1/2} = i/N: minus = limit from the left, plus = from the right.
  [[nodiscard]] auto trace_minus(int i) const -> double { return eval_local(mesh_.wrap(i - 1), 1.0); }
  [[nodiscard]] auto trace_plus(int i) const -> double { return eval_local(mesh_.wrap(i), -1.0); }

 private:
  Mesh mesh_;
  Basis basis_;
  std::vector<double> coeffs_;
};

class DGVectorField {
 public:
  DGVectorField(Mesh mesh, Basis basis) : comp_{DGScalarField(mesh, basis), DGScalarField(mesh, basis)} {}

  [[nodiscard]] auto mesh() const noexcept -> const Mesh& { return comp_[0].mesh(); }
  [[nodiscard]] auto basis() const noexcept -> const Basis& { return comp_[0].basis(); }
  [[nodiscard]] auto operator[](int d) noexcept -> DGScalarField& { return comp_[static_cast<std::size_t>(d)]; }
  [[nodiscard]] auto operator[](int d) const noexcept -> const DGScalarField& {
    return comp_[static_cast<std::size_t>(d)];
  }

  [[nodiscard]] auto eval_local(int cell, double x) const -> Vec2 {
    return {comp_[0].eval_local(cell, x), comp_[1].eval_local(cell, x)};
  }
  [[nodiscard]] auto derivative_local(int cell, double x) const -> Vec2 {
    return {comp_[0].derivative_local(cell, x), comp_[1].derivative_local(cell, x)};
  }
  [[nodiscard]] auto operator()(double rho) const -> Vec2 { return {comp_[0](rho), comp_[1](rho)}; }
  [[nodiscard]] auto trace_minus(int i) const -> Vec2 {
    return {comp_[0].trace_minus(i), comp_[1].trace_minus(i)};
  }
  [[nodiscard]] auto trace_plus(int i) const -> Vec2 {
    return {comp_[0].trace_plus(i), comp_[1].trace_plus(i)};
  }

 private:
  std::array<DGScalarField, 2> comp_;
};

// = L2 projection =================================================================================
using ScalarFunction = std::function<double(double)>;
using CurveFunction = std::function<Vec2(double)>;

// Cellwise L2 projection. With an orthonormal reference basis the coefficient is
// c_{j,a} = int_{-1}^{1} f(rho_j(x)) phi_a(x) dx.
inline auto l2_project(const ScalarFunction& f, const Mesh& mesh, const Basis& basis, int quad_points = 0)
    -> DGScalarField {
  const BasisTable table(basis, quad_points > 0 ? quad_points : default_quad_points(basis));
  DGScalarField out(mesh, basis);
  const double h = mesh.h();
  for (int j = 0; j < mesh.cells(); ++j) {
    for (std::size_t q = 0; q < table.points(); ++q) {
      const double rho = mesh.node(j) + 0.5 * h * (table.rule.nodes[q] + 1.0);
      const double fw = f(rho) * table.rule.weights[q];
      for (int a = 0; a < basis.size(); ++a) { out.coeff(j, a) += fw * table.at(q, a); }
    }
  }
  return out;
}

inline auto l2_project(const CurveFunction& f, const Mesh& mesh, const Basis& basis, int quad_points = 0)
    -> DGVectorField {
  const BasisTable table(basis, quad_points > 0 ? quad_points : default_quad_points(basis));
  DGVectorField out(mesh, basis);
  const double h = mesh.h();
  for (int j = 0; j < mesh.cells(); ++j) {
    for (std::size_t q = 0; q < table.points(); ++q) {
      const double rho = mesh.node(j) + 0.5 * h * (table.rule.nodes[q] + 1.0);
      const Vec2 fw = f(rho) * table.rule.weights[q];
      for (int a = 0; a < basis.size(); ++a) {
        out[0].coeff(j, a) += fw.x() * table.at(q, a);
        out[1].coeff(j, a) += fw.y() * table.at(q, a);
      }
    }
  }
  return out;
}

}  // namespace ldgcurve
