#pragma once

// Observables of a discrete curve: energy split, enclosed area, mesh ratio, sampled polygon and
// tangential velocity.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "ldgcurve/anisotropy.hpp"
#include "ldgcurve/error.hpp"
#include "ldgcurve/flow_solver.hpp"
#include "ldgcurve/mesh_basis.hpp"
#include "ldgcurve/polygon.hpp"

namespace ldgcurve {

struct Energy {
  double total = 0.0;    // W_c
  double surface = 0.0;  // W_1 = sum_j int gamma(theta) Q
  double penalty = 0.0;  // W_2 = alpha/2 sum |X+ - X-|^2
};

inline auto discrete_energy(const CurveState& s, const AnisotropyModel& model, double alpha, int quad_points = 0)
    -> Energy {
  const BasisTable table(s.basis(), quad_points > 0 ? quad_points : default_quad_points(s.basis()));
  const double hh = 0.5 * s.mesh().h();
  Energy e;
  for (int j = 0; j < s.mesh().cells(); ++j) {
    for (std::size_t qp = 0; qp < table.points(); ++qp) {
      Vec2 qv = Vec2::Zero();
      for (int a = 0; a < table.nb; ++a) {
        qv.x() += s.q[0].coeff(j, a) * table.at(qp, a);
        qv.y() += s.q[1].coeff(j, a) * table.at(qp, a);
      }
      const double theta = theta_from_q(qv);
      e.surface += hh * table.rule.weights[qp] * model.eval(theta).gamma * qv.norm();
    }
  }
  for (int i = 0; i < s.mesh().cells(); ++i) {
    e.penalty += 0.5 * alpha * (s.X.trace_plus(i) - s.X.trace_minus(i)).squaredNorm();
  }
  e.total = e.surface + e.penalty;
  return e;
}

// A = sum_j int_{I_j} x d(rho) y, exact for polynomial fields.
inline auto enclosed_area(const CurveState& s) -> double {
  const BasisTable table(s.basis(), s.basis().degree() + 1);
  double A = 0.0;
  for (int j = 0; j < s.mesh().cells(); ++j) {
    for (std::size_t qp = 0; qp < table.points(); ++qp) {
      double x = 0.0;
      double dy = 0.0;
      for (int a = 0; a < table.nb; ++a) {
        x += s.X[0].coeff(j, a) * table.at(qp, a);
        dy += s.X[1].coeff(j, a) * table.d_at(qp, a);
      }
      // d/drho = (2/h) d/dx and drho = (h/2) dx cancel.
      A += table.rule.weights[qp] * x * dy;
    }
  }
  return A;
}

// max_j |h_j| / min_j |h_j| with h_j = X-(rho_{j+1/2}) - X+(rho_{j-1/2}).
inline auto mesh_ratio(const CurveState& s) -> double {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (int j = 0; j < s.mesh().cells(); ++j) {
    const double chord = (s.X.eval_local(j, 1.0) - s.X.eval_local(j, -1.0)).norm();
    lo = std::min(lo, chord);
    hi = std::max(hi, chord);
  }
  if (!(lo > 1e-15 * hi)) {
    throw GeometryError("mesh_ratio: degenerate cell (min chord " + detail::sci(lo) + ", max " +
                        detail::sci(hi) + ")");
  }
  return hi / lo;
}

// points_per_cell interior samples per cell plus the mean of the two traces at every interface.
inline auto sample_polygon(const CurveState& s, int points_per_cell = 300) -> Polygon {
  if (points_per_cell < 2) { throw InvalidArgument("sample_polygon: need at least 2 points per cell"); }
  const int N = s.mesh().cells();
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(N) * (points_per_cell + 1));
  for (int j = 0; j < N; ++j) {
    pts.push_back(0.5 * (s.X.trace_minus(j) + s.X.trace_plus(j)));
    for (int i = 1; i <= points_per_cell; ++i) {
      const double x = -1.0 + 2.0 * i / (points_per_cell + 1.0);
      pts.push_back(s.X.eval_local(j, x));
    }
  }
  return Polygon(std::move(pts));
}

// Parameter values matching the vertices of sample_polygon, in the same order.
inline auto sample_parameters(const Mesh& mesh, int points_per_cell = 300) -> std::vector<double> {
  std::vector<double> rho;
  rho.reserve(static_cast<std::size_t>(mesh.cells()) * (points_per_cell + 1));
  for (int j = 0; j < mesh.cells(); ++j) {
    rho.push_back(mesh.node(j));
    for (int i = 1; i <= points_per_cell; ++i) {
      rho.push_back(mesh.node(j) + mesh.h() * i / (points_per_cell + 1.0));
    }
  }
  return rho;
}

// Projection into V_h of ((X^{m+1} - X^m) / tau) . q^m / |q^m|.
inline auto tangential_velocity(const CurveState& prev, const CurveState& next, double tau, int quad_points = 0)
    -> DGScalarField {
  if (!(prev.mesh() == next.mesh()) || !(prev.basis() == next.basis())) {
    throw InvalidArgument("tangential_velocity: states live on different meshes");
  }
  const BasisTable table(prev.basis(), quad_points > 0 ? quad_points : default_quad_points(prev.basis()));
  DGScalarField out(prev.mesh(), prev.basis());
  for (int j = 0; j < prev.mesh().cells(); ++j) {
    for (std::size_t qp = 0; qp < table.points(); ++qp) {
      Vec2 qv = Vec2::Zero();
      Vec2 dx = Vec2::Zero();
      for (int a = 0; a < table.nb; ++a) {
        const double p = table.at(qp, a);
        qv.x() += prev.q[0].coeff(j, a) * p;
        qv.y() += prev.q[1].coeff(j, a) * p;
        dx.x() += (next.X[0].coeff(j, a) - prev.X[0].coeff(j, a)) * p;
        dx.y() += (next.X[1].coeff(j, a) - prev.X[1].coeff(j, a)) * p;
      }
      const double Q = qv.norm();
      if (!(Q > 0.0)) { throw PositivityError("tangential_velocity: Q vanishes in cell " + std::to_string(j)); }
      const double vt = dx.dot(qv) / (Q * tau);
      for (int a = 0; a < table.nb; ++a) { out.coeff(j, a) += table.rule.weights[qp] * vt * table.at(qp, a); }
    }
  }
  return out;
}

// max - min of a scalar field over `per_cell` uniformly spaced points in every cell.
inline auto field_spread(const DGScalarField& f, int per_cell = 20) -> double {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int j = 0; j < f.mesh().cells(); ++j) {
    for (int i = 0; i < per_cell; ++i) {
      const double v = f.eval_local(j, -1.0 + 2.0 * (i + 0.5) / per_cell);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return hi - lo;
}

struct DiagnosticsRecord {
  double t = 0.0;
  double Wc = 0.0;
  double W1 = 0.0;
  double W2 = 0.0;
  double A = 0.0;
  double dA = 0.0;  // (A - A0) / A0
  double Psi = 1.0;
};

inline auto make_record(const CurveState& s, const AnisotropyModel& model, double alpha, double initial_area,
                        int quad_points = 0) -> DiagnosticsRecord {
  const auto e = discrete_energy(s, model, alpha, quad_points);
  DiagnosticsRecord r;
  r.t = s.time;
  r.W1 = e.surface;
  r.W2 = e.penalty;
  r.Wc = e.total;
  r.A = enclosed_area(s);
  r.dA = (r.A - initial_area) / initial_area;
  r.Psi = mesh_ratio(s);
  return r;
}

}  // namespace ldgcurve
