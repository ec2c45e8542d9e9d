#pragma once

// Initial curves, the exact shrinking circle and reference solutions. All curves use delta = 2 pi rho.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ldgcurve/diagnostics.hpp"
#include "ldgcurve/error.hpp"
#include "ldgcurve/flow_solver.hpp"
#include "ldgcurve/mesh_basis.hpp"
#include "ldgcurve/polygon.hpp"

namespace ldgcurve {

enum class CurveKind { Circle, Ellipse, Flower, Mikula, Custom };

inline auto to_string(CurveKind k) -> std::string {
  switch (k) {
    case CurveKind::Circle: return "circle";
    case CurveKind::Ellipse: return "ellipse";
    case CurveKind::Flower: return "flower";
    case CurveKind::Mikula: return "mikula";
    case CurveKind::Custom: return "custom";
  }
  return "unknown";
}

inline auto parse_curve_kind(const std::string& s) -> CurveKind {
  if (s == "circle" || s == "1") { return CurveKind::Circle; }
  if (s == "ellipse" || s == "2") { return CurveKind::Ellipse; }
  if (s == "flower" || s == "3") { return CurveKind::Flower; }
  if (s == "mikula" || s == "4") { return CurveKind::Mikula; }
  if (s == "custom") { return CurveKind::Custom; }
  throw InvalidArgument("unknown curve kind '" + s + "'");
}

// Periodic cubic spline through (rho_i, p_i), rho strictly increasing in [0,1), period 1.
class PeriodicSpline {
 public:
  PeriodicSpline(std::vector<double> rho, std::vector<Vec2> pts) : rho_(std::move(rho)), p_(std::move(pts)) {
    const std::size_t n = rho_.size();
    if (n < 4 || p_.size() != n) { throw InvalidArgument("custom curve needs at least 4 points (rho, x, y)"); }
    if (rho_.front() < 0.0 || rho_.back() >= 1.0) { throw InvalidArgument("custom curve: rho must lie in [0,1)"); }
    for (std::size_t i = 1; i < n; ++i) {
      if (!(rho_[i] > rho_[i - 1])) { throw InvalidArgument("custom curve: rho must be strictly increasing"); }
    }
    // Second derivatives M from the periodic tridiagonal system, solved densely (n is small).
    const auto len = [&](std::size_t i) { return i + 1 < n ? rho_[i + 1] - rho_[i] : 1.0 + rho_[0] - rho_[n - 1]; };
    const auto ni = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ni, ni);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(ni, 2);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t im = (i + n - 1) % n;
      const std::size_t ip = (i + 1) % n;
      const double hl = len(im);
      const double hr = len(i);
      const auto r = static_cast<Eigen::Index>(i);
      A(r, static_cast<Eigen::Index>(im)) += hl / 6.0;
      A(r, r) += (hl + hr) / 3.0;
      A(r, static_cast<Eigen::Index>(ip)) += hr / 6.0;
      const Vec2 rhs = (p_[ip] - p_[i]) / hr - (p_[i] - p_[im]) / hl;
      b(r, 0) = rhs.x();
      b(r, 1) = rhs.y();
    }
    const Eigen::MatrixXd M = A.partialPivLu().solve(b);
    m_.resize(n);
    for (std::size_t i = 0; i < n; ++i) { m_[i] = {M(static_cast<Eigen::Index>(i), 0), M(static_cast<Eigen::Index>(i), 1)}; }
  }

  // Value (order 0) or first derivative (order 1) at rho.
  [[nodiscard]] auto eval(double rho, int order = 0) const -> Vec2 {
    const std::size_t n = rho_.size();
    double r = rho - std::floor(rho);
    if (r < rho_[0]) { r += 1.0; }
    std::size_t i = n - 1;
    for (std::size_t s = 0; s + 1 < n; ++s) {
      if (r < rho_[s + 1]) {
        i = s;
        break;
      }
    }
    const std::size_t ip = (i + 1) % n;
    const double h = i + 1 < n ? rho_[i + 1] - rho_[i] : 1.0 + rho_[0] - rho_[n - 1];
    const double a = (rho_[i] + h - r) / h;
    const double b = 1.0 - a;
    if (order == 0) {
      return a * p_[i] + b * p_[ip] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[ip]) * (h * h / 6.0);
    }
    return (p_[ip] - p_[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * m_[i] + (3.0 * b * b - 1.0) / 6.0 * h * m_[ip];
  }

 private:
  std::vector<double> rho_;
  std::vector<Vec2> p_;
  std::vector<Vec2> m_;
};

// Reads rows "rho,x,y"; a header line and blank lines are skipped.
inline auto read_curve_csv(const std::string& path) -> PeriodicSpline {
  std::ifstream in(path);
  if (!in) { throw InvalidArgument("cannot open curve file '" + path + "'"); }
  std::vector<double> rho;
  std::vector<Vec2> pts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) { continue; }
    for (auto& c : line) {
      if (c == ',') { c = ' '; }
    }
    std::istringstream ss(line);
    double r = 0.0, x = 0.0, y = 0.0;
    if (!(ss >> r >> x >> y)) {
      if (rho.empty()) { continue; }
      throw InvalidArgument("malformed row in curve file: '" + line + "'");
    }
    rho.push_back(r);
    pts.emplace_back(x, y);
  }
  return PeriodicSpline(std::move(rho), std::move(pts));
}

class CurveSpec {
 public:
  [[nodiscard]] auto kind() const noexcept -> CurveKind { return kind_; }
  [[nodiscard]] auto params() const noexcept -> const std::vector<double>& { return params_; }

  [[nodiscard]] auto operator()(double rho) const -> Vec2 { return eval(rho, 0); }
  [[nodiscard]] auto derivative(double rho) const -> Vec2 { return eval(rho, 1); }
  [[nodiscard]] auto function() const -> CurveFunction {
    return [self = *this](double rho) { return self(rho); };
  }

  static auto circle(double radius = 1.0) -> CurveSpec {
    if (!(radius > 0.0)) { throw InvalidArgument("circle radius must be positive"); }
    return CurveSpec(CurveKind::Circle, {radius});
  }
  static auto ellipse(double a = 2.0, double b = 1.0) -> CurveSpec {
    if (!(a > 0.0) || !(b > 0.0)) { throw InvalidArgument("ellipse semi-axes must be positive"); }
    return CurveSpec(CurveKind::Ellipse, {a, b});
  }
  static auto flower() -> CurveSpec { return CurveSpec(CurveKind::Flower, {}); }
  static auto mikula() -> CurveSpec { return CurveSpec(CurveKind::Mikula, {}); }
  static auto custom(PeriodicSpline spline) -> CurveSpec {
    CurveSpec c(CurveKind::Custom, {});
    c.spline_ = std::make_shared<const PeriodicSpline>(std::move(spline));
    return c;
  }

 private:
  CurveSpec(CurveKind kind, std::vector<double> params) : kind_(kind), params_(std::move(params)) {}

  [[nodiscard]] auto eval(double rho, int order) const -> Vec2 {
    constexpr double tp = 2.0 * std::numbers::pi;
    const double d = tp * rho;
    const double c = std::cos(d);
    const double s = std::sin(d);
    switch (kind_) {
      case CurveKind::Circle: {
        const double r = params_[0];
        return order == 0 ? Vec2(r * c, r * s) : Vec2(-tp * r * s, tp * r * c);
      }
      case CurveKind::Ellipse: {
        const double a = params_[0];
        const double b = params_[1];
        return order == 0 ? Vec2(a * c, b * s) : Vec2(-tp * a * s, tp * b * c);
      }
      case CurveKind::Flower: {
        const double r = 2.0 + std::cos(6.0 * d);
        if (order == 0) { return {r * c, r * s}; }
        const double dr = -6.0 * std::sin(6.0 * d);
        return {tp * (dr * c - r * s), tp * (dr * s + r * c)};
      }
      case CurveKind::Mikula: {
        if (order == 0) {
          const double bracket =
              1.0 - std::cos(2.0 * d) + 0.5 * std::cos(4.0 * d) - std::cos(6.0 * d) + 0.5 * std::cos(8.0 * d);
          return {2.0 * c, 2.0 * (0.7 * s + std::sin(c) + 0.25 * bracket)};
        }
        const double dbracket = 2.0 * std::sin(2.0 * d) - 2.0 * std::sin(4.0 * d) + 6.0 * std::sin(6.0 * d) -
                                4.0 * std::sin(8.0 * d);
        return {-tp * 2.0 * s, tp * 2.0 * (0.7 * c - std::cos(c) * s + 0.25 * dbracket)};
      }
      case CurveKind::Custom: return spline_->eval(rho, order);
    }
    throw InvalidArgument("unknown curve kind");
  }

  CurveKind kind_;
  std::vector<double> params_;
  std::shared_ptr<const PeriodicSpline> spline_;
};

// Curve 1..4 with the default parameters.
inline auto initial_curve(CurveKind kind) -> CurveSpec {
  switch (kind) {
    case CurveKind::Circle: return CurveSpec::circle();
    case CurveKind::Ellipse: return CurveSpec::ellipse();
    case CurveKind::Flower: return CurveSpec::flower();
    case CurveKind::Mikula: return CurveSpec::mikula();
    case CurveKind::Custom: break;
  }
  throw InvalidArgument("custom curves need a point file");
}

// Unit circle shrinking under isotropic curve-shortening flow: sqrt(1 - 2t) (cos, sin).
inline auto exact_circle(double t, double rho) -> Vec2 {
  if (!(t >= 0.0)) { throw InvalidArgument("exact_circle: time must be non-negative"); }
  if (t >= 0.5) { throw ExtinctionError("exact_circle: the circle vanishes at t = 0.5"); }
  const double r = std::sqrt(1.0 - 2.0 * t);
  const double d = 2.0 * std::numbers::pi * rho;
  return {r * std::cos(d), r * std::sin(d)};
}

// Polygon of exact_circle at time t sampled at the parameters of sample_polygon.
inline auto exact_circle_polygon(double t, const Mesh& mesh, int points_per_cell = 300) -> Polygon {
  std::vector<Vec2> pts;
  for (double rho : sample_parameters(mesh, points_per_cell)) { pts.push_back(exact_circle(t, rho)); }
  return Polygon(std::move(pts));
}

struct ReferenceOptions {
  int cells = 80;
  int degree = 4;
  double tau = 1e-4;
  // Combine runs at tau and tau/2 as 2 X(tau/2) - X(tau), cancelling the O(tau) time error.
  bool richardson = true;
  int points_per_cell = 300;
};

// Solves at the reference resolution up to params.final_time.
// study_max_cells / study_min_tau guard the precondition that the reference is finer than the study.
inline auto reference_state(const CurveSpec& spec, FlowParams params, const ReferenceOptions& ref,
                            int study_max_cells, double study_min_tau) -> CurveState {
  if (ref.cells <= study_max_cells) {
    throw InvalidArgument("reference_solution: ref_N = " + std::to_string(ref.cells) +
                          " must exceed every study N (max " + std::to_string(study_max_cells) + ")");
  }
  if (!(ref.tau < study_min_tau)) {
    throw InvalidArgument("reference_solution: reference time step must be below every study time step");
  }
  const Mesh mesh(ref.cells);
  const Basis basis(ref.degree);
  params.tau = ref.tau;
  const CurveState init = init_state(spec.function(), mesh, basis, params);
  CurveState coarse = run(init, params);
  if (!ref.richardson) { return coarse; }
  params.tau = 0.5 * ref.tau;
  CurveState fine = run(init, params);
  for (int d = 0; d < 2; ++d) {
    auto& c = fine.X[d].coeffs();
    const auto& g = coarse.X[d].coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) { c[i] = 2.0 * c[i] - g[i]; }
  }
  return fine;
}

inline auto reference_solution(const CurveSpec& spec, const FlowParams& params, const ReferenceOptions& ref,
                               int study_max_cells, double study_min_tau) -> Polygon {
  return sample_polygon(reference_state(spec, params, ref, study_max_cells, study_min_tau), ref.points_per_cell);
}

}  // namespace ldgcurve
