#pragma once

// Surface energy density gamma(theta), surface energy matrix G(theta), regime classification
// and Wulff shape construction.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "ldgcurve/error.hpp"
#include "ldgcurve/mesh_basis.hpp"
#include "ldgcurve/polygon.hpp"

namespace ldgcurve {

// Reduces theta to [-pi, pi].
inline auto reduce_angle(double theta) -> double {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (theta >= -std::numbers::pi && theta <= std::numbers::pi) { return theta; }
  double r = std::remainder(theta, two_pi);
  if (r < -std::numbers::pi) { r += two_pi; }
  if (r > std::numbers::pi) { r -= two_pi; }
  return r;
}

struct GammaValues {
  double gamma = 1.0;
  double d1 = 0.0;  // gamma'
  double d2 = 0.0;  // gamma''
};

class AnisotropyModel {
 public:
  enum class Kind { LFold, Custom };
  using Density = std::function<double(double)>;

  // gamma(theta) = 1 + beta cos(l theta)
  static auto lfold(double beta, int fold) -> AnisotropyModel {
    if (fold < 1) { throw InvalidArgument("fold number must be positive"); }
    if (!std::isfinite(beta)) { throw InvalidArgument("anisotropy strength must be finite"); }
    AnisotropyModel m;
    m.kind_ = Kind::LFold;
    m.beta_ = beta;
    m.fold_ = fold;
    return m;
  }
  static auto isotropic() -> AnisotropyModel { return lfold(0.0, 4); }

  // gamma, gamma' and gamma'' must all be supplied analytically.
  static auto custom(Density gamma, Density d1, Density d2) -> AnisotropyModel {
    if (!gamma || !d1 || !d2) {
      throw InvalidArgument("custom anisotropy needs analytic gamma, gamma' and gamma''");
    }
    AnisotropyModel m;
    m.kind_ = Kind::Custom;
    m.gamma_ = std::move(gamma);
    m.d1_ = std::move(d1);
    m.d2_ = std::move(d2);
    return m;
  }

  [[nodiscard]] auto kind() const noexcept -> Kind { return kind_; }
  [[nodiscard]] auto beta() const noexcept -> double { return beta_; }
  [[nodiscard]] auto fold() const noexcept -> int { return fold_; }

  [[nodiscard]] auto eval(double theta) const -> GammaValues {
    const double t = reduce_angle(theta);
    if (kind_ == Kind::LFold) {
      const double l = fold_;
      const double c = std::cos(l * t);
      const double s = std::sin(l * t);
      return {1.0 + beta_ * c, -beta_ * l * s, -beta_ * l * l * c};
    }
    return {gamma_(t), d1_(t), d2_(t)};
  }

 private:
  AnisotropyModel() = default;

  Kind kind_ = Kind::LFold;
  double beta_ = 0.0;
  int fold_ = 4;
  Density gamma_;
  Density d1_;
  Density d2_;
};

inline auto gamma_eval(const AnisotropyModel& model, double theta) -> GammaValues { return model.eval(theta); }

// G = [[gamma, -gamma'], [gamma', gamma]]
inline auto g_matrix(const AnisotropyModel& model, double theta) -> Eigen::Matrix2d {
  const auto g = model.eval(theta);
  Eigen::Matrix2d m;
  m << g.gamma, -g.d1, g.d1, g.gamma;
  return m;
}

// = Regime ========================================================================================
enum class RegimeKind { Isotropic, Weak, Marginal, Strong };

inline auto to_string(RegimeKind r) -> std::string {
  switch (r) {
    case RegimeKind::Isotropic: return "isotropic";
    case RegimeKind::Weak: return "weak";
    case RegimeKind::Marginal: return "marginal";
    case RegimeKind::Strong: return "strong";
  }
  return "unknown";
}

struct Regime {
  RegimeKind kind = RegimeKind::Isotropic;
  double min_stiffness = 1.0;  // min over samples of gamma + gamma''
};

inline auto classify_regime(const AnisotropyModel& model, int samples = 3600) -> Regime {
  if (samples < 360) { throw InvalidArgument("classify_regime: need at least 360 samples"); }
  constexpr double tol = 1e-10;
  Regime out;
  out.min_stiffness = std::numeric_limits<double>::infinity();
  const double g0 = model.eval(-std::numbers::pi).gamma;
  bool constant = true;
  for (int i = 0; i < samples; ++i) {
    const double theta = -std::numbers::pi + 2.0 * std::numbers::pi * i / samples;
    const auto g = model.eval(theta);
    out.min_stiffness = std::min(out.min_stiffness, g.gamma + g.d2);
    if (std::abs(g.gamma - g0) > tol || std::abs(g.d1) > tol || std::abs(g.d2) > tol) { constant = false; }
  }
  if (constant) {
    out.kind = RegimeKind::Isotropic;
  } else if (out.min_stiffness > tol) {
    out.kind = RegimeKind::Weak;
  } else if (out.min_stiffness < -tol) {
    out.kind = RegimeKind::Strong;
  } else {
    out.kind = RegimeKind::Marginal;
  }
  return out;
}

// = Wulff shape ===================================================================================
inline auto wulff_normal(double theta) -> Vec2 { return {-std::sin(theta), std::cos(theta)}; }

// Wulff envelope (x, y) = (-g sin - g' cos, g cos - g' sin) on a uniform theta grid.
// Self-intersecting ("eared") under strong anisotropy.
inline auto wulff_envelope(const AnisotropyModel& model, int samples) -> std::vector<Vec2> {
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const double t = -std::numbers::pi + 2.0 * std::numbers::pi * i / samples;
    const auto g = model.eval(t);
    pts.emplace_back(-g.gamma * std::sin(t) - g.d1 * std::cos(t), g.gamma * std::cos(t) - g.d1 * std::sin(t));
  }
  return pts;
}

namespace detail {

// Keeps the part of a convex polygon with p . n <= c.
inline auto clip_half_plane(const std::vector<Vec2>& poly, const Vec2& n, double c) -> std::vector<Vec2> {
  std::vector<Vec2> out;
  out.reserve(poly.size() + 1);
  const std::size_t m = poly.size();
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % m];
    const double fa = a.dot(n) - c;
    const double fb = b.dot(n) - c;
    if (fa <= 0.0) { out.push_back(a); }
    if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)) { out.push_back(a + (b - a) * (fa / (fa - fb))); }
  }
  return out;
}

}  // namespace detail

// Intersection of {p : p . n(theta) <= gamma(theta)} over the sampled theta grid, rescaled about
// the origin to the requested area. Ears of the envelope never survive the intersection.
inline auto wulff_shape(const AnisotropyModel& model, int samples, double target_area) -> Polygon {
  if (samples < 64) { throw InvalidArgument("wulff_shape: need at least 64 samples"); }
  if (!(target_area > 0.0)) { throw InvalidArgument("wulff_shape: target area must be positive"); }
  double gmax = 0.0;
  for (int i = 0; i < samples; ++i) {
    gmax = std::max(gmax, std::abs(model.eval(-std::numbers::pi + 2.0 * std::numbers::pi * i / samples).gamma));
  }
  const double b = 4.0 * gmax + 1.0;
  std::vector<Vec2> poly = {{-b, -b}, {b, -b}, {b, b}, {-b, b}};
  for (int i = 0; i < samples && !poly.empty(); ++i) {
    const double t = -std::numbers::pi + 2.0 * std::numbers::pi * i / samples;
    poly = detail::clip_half_plane(poly, wulff_normal(t), model.eval(t).gamma);
  }
  if (poly.size() < 3) { throw GeometryError("wulff_shape: half-plane intersection is empty"); }
  Polygon shape = cleanup(Polygon(std::move(poly)), 1e-12);
  const double area = shape.area();
  if (!(area > 0.0)) { throw GeometryError("wulff_shape: half-plane intersection is degenerate"); }
  const double s = std::sqrt(target_area / area);
  std::vector<Vec2> scaled;
  scaled.reserve(shape.size());
  for (const auto& v : shape.vertices()) { scaled.push_back(s * v); }
  return Polygon(std::move(scaled));
}

}  // namespace ldgcurve
