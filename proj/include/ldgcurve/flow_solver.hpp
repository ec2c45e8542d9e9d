#pragma once

// Fully discrete semi-implicit LDG scheme for (area-preserving) anisotropic curve-shortening flow.
//
// Unknowns per cell, each expanded in the k+1 orthonormal Legendre functions:
//   mu, X1, X2, q1, q2, xi1, xi2        (cell-major: dof = (cell * 7 + field) * (k+1) + a)
// Geometry (n*, Q, theta) is frozen at the old time level; everything else is implicit.
// Fluxes: X^ = X+, xi^ = xi- + alpha (X+ - X-).

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ldgcurve/anisotropy.hpp"
#include "ldgcurve/error.hpp"
#include "ldgcurve/mesh_basis.hpp"

namespace ldgcurve {

enum class FlowKind { CSF, APCSF };

inline auto to_string(FlowKind f) -> std::string { return f == FlowKind::CSF ? "csf" : "apcsf"; }

// Block: cellwise elimination of q, xi, mu and a periodic block-tridiagonal solve for X, with a
// residual check that falls back to Sparse. Sparse: SparseLU on the full row-equilibrated system.
enum class SolverBackend { Block, Sparse };

struct CurveState {
  double time = 0.0;
  DGVectorField X;
  DGVectorField q;
  DGVectorField xi;
  DGScalarField mu;

  CurveState(const Mesh& mesh, const Basis& basis)
      : X(mesh, basis), q(mesh, basis), xi(mesh, basis), mu(mesh, basis) {}

  [[nodiscard]] auto mesh() const noexcept -> const Mesh& { return X.mesh(); }
  [[nodiscard]] auto basis() const noexcept -> const Basis& { return X.basis(); }
};

struct FlowParams {
  FlowKind flow = FlowKind::CSF;
  double tau = 1e-3;
  std::optional<double> alpha;  // unset: 1/h
  double final_time = 1.0;
  AnisotropyModel anisotropy = AnisotropyModel::isotropic();
  int quad_points = 0;          // 0: k + 3
  std::optional<double> q_floor;  // unset: 1e-12 * length of the initial curve
  // Smallest admissible |U_ii| / max |U_ii| of the row-equilibrated step matrix.
  double pivot_tolerance = 1e-12;
  SolverBackend backend = SolverBackend::Block;
};

inline auto resolve_alpha(const FlowParams& p, const Mesh& mesh) -> double {
  return p.alpha.value_or(1.0 / mesh.h());
}
inline auto resolve_quad_points(const FlowParams& p, const Basis& basis) -> int {
  return p.quad_points > 0 ? p.quad_points : default_quad_points(basis);
}

// Angle theta in [-pi, pi] with q = |q| (cos theta, sin theta).
inline auto theta_from_q(const Vec2& q, double q_floor = 0.0) -> double {
  const double Q = q.norm();
  if (!(Q > q_floor)) {
    throw PositivityError("|q| = " + detail::sci(Q) + " is not above the positivity floor " + detail::sci(q_floor));
  }
  return std::atan2(q.y(), q.x());
}

// Length of the discrete curve, sum_j int_{I_j} |q| drho.
inline auto discrete_length(const CurveState& state, int quad_points = 0) -> double {
  const BasisTable table(state.basis(), quad_points > 0 ? quad_points : default_quad_points(state.basis()));
  const double h = state.mesh().h();
  double L = 0.0;
  for (int j = 0; j < state.mesh().cells(); ++j) {
    for (std::size_t qp = 0; qp < table.points(); ++qp) {
      Vec2 qv = Vec2::Zero();
      for (int a = 0; a < table.nb; ++a) {
        qv.x() += state.q[0].coeff(j, a) * table.at(qp, a);
        qv.y() += state.q[1].coeff(j, a) * table.at(qp, a);
      }
      L += 0.5 * h * table.rule.weights[qp] * qv.norm();
    }
  }
  return L;
}

// q solving the local derivative equation with flux X^ = X+:
//   (h/2) q_a = phi_a(1) X_{j+1}(-1) - phi_a(-1) X_j(-1) - sum_b D_ab X_b,   D_ab = int phi_a' phi_b.
inline auto discrete_derivative(const DGVectorField& X) -> DGVectorField {
  const Mesh& mesh = X.mesh();
  const Basis& basis = X.basis();
  const int nb = basis.size();
  const BasisTable table(basis, basis.degree() + 1);
  DGVectorField q(mesh, basis);
  const double scale = 2.0 / mesh.h();
  for (int d = 0; d < 2; ++d) {
    for (int j = 0; j < mesh.cells(); ++j) {
      const int jp = mesh.wrap(j + 1);
      double right_plus = 0.0;
      double left_plus = 0.0;
      for (int b = 0; b < nb; ++b) {
        right_plus += X[d].coeff(jp, b) * table.left[static_cast<std::size_t>(b)];
        left_plus += X[d].coeff(j, b) * table.left[static_cast<std::size_t>(b)];
      }
      for (int a = 0; a < nb; ++a) {
        double vol = 0.0;
        for (std::size_t qp = 0; qp < table.points(); ++qp) {
          double xv = 0.0;
          for (int b = 0; b < nb; ++b) { xv += X[d].coeff(j, b) * table.at(qp, b); }
          vol += table.rule.weights[qp] * table.d_at(qp, a) * xv;
        }
        q[d].coeff(j, a) = scale * (table.right[static_cast<std::size_t>(a)] * right_plus -
                                    table.left[static_cast<std::size_t>(a)] * left_plus - vol);
      }
    }
  }
  return q;
}

namespace detail {

// Geometry of the old state at one volume quadrature point.
struct FrozenPoint {
  Vec2 nstar;     // (-q2, q1)
  double Q;       // |q|
  double gamma;
  double dgamma;
  double xdotn;   // X . n*
};

inline auto freeze_geometry(const CurveState& s, const BasisTable& table, const AnisotropyModel& model,
                            double q_floor) -> std::vector<FrozenPoint> {
  const int N = s.mesh().cells();
  const std::size_t nq = table.points();
  std::vector<FrozenPoint> out(static_cast<std::size_t>(N) * nq);
  for (int j = 0; j < N; ++j) {
    for (std::size_t qp = 0; qp < nq; ++qp) {
      Vec2 qv = Vec2::Zero();
      Vec2 xv = Vec2::Zero();
      for (int a = 0; a < table.nb; ++a) {
        const double p = table.at(qp, a);
        qv.x() += s.q[0].coeff(j, a) * p;
        qv.y() += s.q[1].coeff(j, a) * p;
        xv.x() += s.X[0].coeff(j, a) * p;
        xv.y() += s.X[1].coeff(j, a) * p;
      }
      const double Q = qv.norm();
      if (!(Q > q_floor)) {
        throw PositivityError("Q = " + detail::sci(Q) + " <= floor " + detail::sci(q_floor) +
                              " in cell " + std::to_string(j));
      }
      const auto g = model.eval(std::atan2(qv.y(), qv.x()));
      const Vec2 nstar(-qv.y(), qv.x());
      out[static_cast<std::size_t>(j) * nq + qp] = {nstar, Q, g.gamma, g.d1, xv.dot(nstar)};
    }
  }
  return out;
}

// Exposes the diagonal of U, which SparseLU keeps inside its supernodal L storage.
class PivotSparseLU : public Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> {
 public:
  [[nodiscard]] auto pivot_range() const -> std::pair<double, double> {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (Eigen::Index j = 0; j < this->cols(); ++j) {
      double d = 0.0;
      for (SCMatrix::InnerIterator it(m_Lstore, j); it; ++it) {
        if (it.row() < j) { continue; }
        if (it.row() == j) { d = std::abs(it.value()); }
        break;
      }
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    return {lo, hi};
  }
};

using Block = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 10, 10>;
using BlockVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 10, 1>;

// Block LU of a periodic block-tridiagonal matrix,
//   lower_j x_{j-1} + diag_j x_j + upper_j x_{j+1} = b_j   (indices mod n),
// eliminating x_0 .. x_{n-2} in order while carrying a fill column towards x_{n-1}.
// Partial pivoting happens inside each diagonal block only.
class CyclicBlockSolver {
 public:
  void factorize(const std::vector<Block>& lower, const std::vector<Block>& diag, const std::vector<Block>& upper) {
    const std::size_t n = diag.size();
    const std::size_t m = n - 1;
    n_ = n;
    lu_.assign(n, {});
    upper_.assign(n, {});
    fill_.assign(n, {});
    down_.assign(n, {});
    last_.assign(n, {});
    Block d = diag[0];
    Block fill = lower[0];
    Block row_coeff = upper[m];
    Block last = diag[m];
    for (std::size_t j = 0; j < m; ++j) {
      if (j + 1 == m) { fill += upper[j]; }
      lu_[j].compute(d);
      const Block dinv = lu_[j].inverse();
      fill_[j] = fill;
      if (j + 1 == m) { row_coeff += lower[m]; }
      last_[j] = row_coeff.lazyProduct(dinv);
      last -= last_[j].lazyProduct(fill);
      if (j + 1 < m) {
        upper_[j] = upper[j];
        down_[j + 1] = lower[j + 1].lazyProduct(dinv);
        d = diag[j + 1] - down_[j + 1].lazyProduct(upper[j]);
        fill = Block(-down_[j + 1].lazyProduct(fill));
        row_coeff = -last_[j].lazyProduct(upper[j]);
      }
    }
    lu_[m].compute(last);
  }

  [[nodiscard]] auto solve(std::vector<BlockVector> b) const -> std::vector<BlockVector> {
    const std::size_t m = n_ - 1;
    BlockVector last = b[m];
    for (std::size_t j = 0; j < m; ++j) {
      if (j > 0) { b[j] -= down_[j] * b[j - 1]; }
      last -= last_[j] * b[j];
    }
    std::vector<BlockVector> x(n_);
    x[m] = lu_[m].solve(last);
    for (std::size_t jj = m; jj-- > 0;) {
      BlockVector r = b[jj] - fill_[jj] * x[m];
      if (jj + 1 < m) { r -= upper_[jj] * x[jj + 1]; }
      x[jj] = lu_[jj].solve(r);
    }
    return x;
  }

  // min |U_ii| / max |U_ii| over all diagonal-block factorizations.
  [[nodiscard]] auto pivot_ratio() const -> double {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& lu : lu_) {
      const auto dg = lu.matrixLU().diagonal().cwiseAbs();
      lo = std::min(lo, dg.minCoeff());
      hi = std::max(hi, dg.maxCoeff());
    }
    return hi > 0.0 && std::isfinite(lo) && std::isfinite(hi) ? lo / hi : 0.0;
  }

 private:
  std::size_t n_ = 0;
  std::vector<Eigen::PartialPivLU<Block>> lu_;
  std::vector<Block> upper_;
  std::vector<Block> fill_;
  std::vector<Block> down_;
  std::vector<Block> last_;
};

// Cellwise matrices of the step operator built from the frozen geometry of one cell.
struct CellOperator {
  Block mn1;  // int n*_1 phi_a phi_b
  Block mn2;
  Block mq;   // int Q phi_a phi_b
  Block mq_inv;
  Block k;    // [[g11, g12], [g21, g22]], g = int G/Q phi_a phi_b
  BlockVector xn;  // int (X^m . n*) phi_a
  BlockVector qa;  // int Q phi_a
};

}  // namespace detail

struct StepInfo {
  long step = 0;
  double time = 0.0;
  double tau = 0.0;
  double residual = 0.0;     // ||A z - b||_inf / ||b||_inf
  double pivot_ratio = 0.0;  // min |U_ii| / max |U_ii|
  double sm_denominator = 1.0;
  SolverBackend backend = SolverBackend::Sparse;
};

struct StepResult {
  CurveState state;
  StepInfo info;
};

// Assembled linear system of one step (row-equilibrated) plus the AP-CSF rank-one pieces.
struct StepSystem {
  Eigen::SparseMatrix<double> matrix;
  Eigen::VectorXd rhs;
  Eigen::VectorXd column;  // u: rank-one column, already row-scaled
  Eigen::VectorXd row;     // w: <mu>_h = w . z
};

class Stepper {
 public:
  static constexpr int kFields = 7;
  enum Field : int { MU = 0, X1 = 1, X2 = 2, Q1 = 3, Q2 = 4, XI1 = 5, XI2 = 6 };

  Stepper(const Mesh& mesh, const Basis& basis, FlowParams params)
      : mesh_(mesh),
        basis_(basis),
        params_(std::move(params)),
        table_(basis, resolve_quad_points(params_, basis)),
        alpha_(resolve_alpha(params_, mesh)),
        lu_(std::make_unique<detail::PivotSparseLU>()) {
    if (!(params_.tau > 0.0)) { throw InvalidArgument("time step must be positive"); }
    if (alpha_ < 0.0) { throw InvalidArgument("penalty coefficient must be non-negative"); }
    // D_ab = int phi_a' phi_b on the reference element, exact with k+1 points.
    const BasisTable exact(basis, basis.degree() + 1);
    const int nb = basis.size();
    D_.assign(static_cast<std::size_t>(nb * nb), 0.0);
    for (int a = 0; a < nb; ++a) {
      for (int b = 0; b < nb; ++b) {
        double s = 0.0;
        for (std::size_t qp = 0; qp < exact.points(); ++qp) {
          s += exact.rule.weights[qp] * exact.d_at(qp, a) * exact.at(qp, b);
        }
        D_[static_cast<std::size_t>(a * nb + b)] = s;
      }
    }
  }

  [[nodiscard]] auto params() const noexcept -> const FlowParams& { return params_; }
  [[nodiscard]] auto alpha() const noexcept -> double { return alpha_; }
  [[nodiscard]] auto dofs() const noexcept -> Eigen::Index {
    return static_cast<Eigen::Index>(mesh_.cells()) * kFields * basis_.size();
  }
  [[nodiscard]] auto dof(int cell, int field, int a) const noexcept -> Eigen::Index {
    return (static_cast<Eigen::Index>(mesh_.wrap(cell)) * kFields + field) * basis_.size() + a;
  }

  // Diagnostics of the most recent step attempt, filled as far as it got when the step threw.
  [[nodiscard]] auto last_attempt() const noexcept -> const StepInfo& { return attempt_; }

  // Positivity floor for this stepper; fixed from the first state when not configured.
  void set_q_floor(double floor) { q_floor_ = floor; }
  [[nodiscard]] auto q_floor_for(const CurveState& s) const -> double {
    if (params_.q_floor) { return *params_.q_floor; }
    if (q_floor_) { return *q_floor_; }
    return 1e-12 * discrete_length(s, static_cast<int>(table_.points()));
  }

  // Builds the step matrix and right-hand side from the old state.
  [[nodiscard]] auto assemble(const CurveState& s, double tau) const -> StepSystem {
    const int N = mesh_.cells();
    const int nb = basis_.size();
    const std::size_t nq = table_.points();
    const double h = mesh_.h();
    const double hh = 0.5 * h;
    const auto frozen = detail::freeze_geometry(s, table_, params_.anisotropy, q_floor_for(s));
    const auto& wq = table_.rule.weights;
    const auto& L = table_.left;
    const auto& R = table_.right;

    StepSystem sys;
    const Eigen::Index n = dofs();
    sys.rhs = Eigen::VectorXd::Zero(n);
    sys.column = Eigen::VectorXd::Zero(n);
    sys.row = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(N) * nb * nb * 40);
    auto add = [&trip](Eigen::Index r, Eigen::Index c, double v) { trip.emplace_back(r, c, v); };

    double length = 0.0;
    for (int j = 0; j < N; ++j) {
      const detail::FrozenPoint* fp = &frozen[static_cast<std::size_t>(j) * nq];
      for (int a = 0; a < nb; ++a) {
        // Row mu: tau * (3.1a).
        double rhs = 0.0;
        double qa = 0.0;
        for (std::size_t qp = 0; qp < nq; ++qp) {
          rhs += wq[qp] * fp[qp].xdotn * table_.at(qp, a);
          qa += wq[qp] * fp[qp].Q * table_.at(qp, a);
        }
        sys.rhs[dof(j, MU, a)] = hh * rhs;
        sys.column[dof(j, MU, a)] = -tau * hh * qa;
        sys.row[dof(j, MU, a)] = hh * qa;
        for (int b = 0; b < nb; ++b) {
          double mn1 = 0.0, mn2 = 0.0, mq = 0.0, g11 = 0.0, g12 = 0.0, g21 = 0.0, g22 = 0.0;
          for (std::size_t qp = 0; qp < nq; ++qp) {
            const double pp = wq[qp] * table_.at(qp, a) * table_.at(qp, b);
            const auto& f = fp[qp];
            mn1 += pp * f.nstar.x();
            mn2 += pp * f.nstar.y();
            mq += pp * f.Q;
            g11 += pp * f.gamma / f.Q;
            g12 -= pp * f.dgamma / f.Q;
            g21 += pp * f.dgamma / f.Q;
            g22 += pp * f.gamma / f.Q;
          }
          const double Dab = D_[static_cast<std::size_t>(a * nb + b)];
          const double ident = a == b ? hh : 0.0;

          add(dof(j, MU, a), dof(j, X1, b), hh * mn1);
          add(dof(j, MU, a), dof(j, X2, b), hh * mn2);
          add(dof(j, MU, a), dof(j, MU, b), tau * hh * mq);

          // Rows X_d: (3.1b) tested with phi_a e_d.
          const double nd[2] = {hh * mn1, hh * mn2};
          for (int d = 0; d < 2; ++d) {
            const int Xd = X1 + d;
            const int XId = XI1 + d;
            const Eigen::Index r = dof(j, Xd, a);
            add(r, dof(j, MU, b), nd[d]);
            add(r, dof(j, XId, b), -Dab + R[a] * R[b]);
            add(r, dof(j - 1, XId, b), -L[a] * R[b]);
            add(r, dof(j, Xd, b), -alpha_ * (R[a] * R[b] + L[a] * L[b]));
            add(r, dof(j + 1, Xd, b), alpha_ * R[a] * L[b]);
            add(r, dof(j - 1, Xd, b), alpha_ * L[a] * R[b]);
          }

          // Rows xi_d: (3.1c).
          add(dof(j, XI1, a), dof(j, XI1, b), ident);
          add(dof(j, XI2, a), dof(j, XI2, b), ident);
          add(dof(j, XI1, a), dof(j, Q1, b), -hh * g11);
          add(dof(j, XI1, a), dof(j, Q2, b), -hh * g12);
          add(dof(j, XI2, a), dof(j, Q1, b), -hh * g21);
          add(dof(j, XI2, a), dof(j, Q2, b), -hh * g22);

          // Rows q_d: (3.1d).
          for (int d = 0; d < 2; ++d) {
            const Eigen::Index r = dof(j, Q1 + d, a);
            add(r, dof(j, Q1 + d, b), ident);
            add(r, dof(j, X1 + d, b), Dab + L[a] * L[b]);
            add(r, dof(j + 1, X1 + d, b), -R[a] * L[b]);
          }
        }
      }
      for (std::size_t qp = 0; qp < nq; ++qp) { length += hh * wq[qp] * fp[qp].Q; }
    }
    sys.row /= length;

    sys.matrix.resize(n, n);
    sys.matrix.setFromTriplets(trip.begin(), trip.end());
    sys.matrix.makeCompressed();

    // Row equilibration: every row scaled to unit max-norm.
    Eigen::VectorXd scale = Eigen::VectorXd::Zero(n);
    for (Eigen::Index c = 0; c < sys.matrix.outerSize(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(sys.matrix, c); it; ++it) {
        scale[it.row()] = std::max(scale[it.row()], std::abs(it.value()));
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) { scale[i] = scale[i] > 0.0 ? 1.0 / scale[i] : 1.0; }
    sys.matrix = scale.asDiagonal() * sys.matrix;
    sys.matrix.makeCompressed();
    sys.rhs = scale.cwiseProduct(sys.rhs);
    sys.column = scale.cwiseProduct(sys.column);
    return sys;
  }

  // One step of CSF or AP-CSF (per params().flow) from s with step size tau.
  [[nodiscard]] auto step(const CurveState& s, std::optional<double> tau_override = std::nullopt) -> StepResult {
    const double tau = tau_override.value_or(params_.tau);
    attempt_ = StepInfo{};
    attempt_.tau = tau;
    if (params_.backend == SolverBackend::Block) {
      if (auto fast = step_block(s, tau)) { return std::move(*fast); }
    }
    return step_sparse(s, tau);
  }

  // Full step operator (unscaled rows) applied to z, without the AP-CSF rank-one term.
  [[nodiscard]] auto apply(const CurveState& s, double tau, const Eigen::VectorXd& z) const -> Eigen::VectorXd {
    return apply_cells(build_cells(s), tau, z);
  }

  // Unscaled right-hand side, rank-one column u and row w of one step.
  [[nodiscard]] auto rank_one_parts(const CurveState& s, double tau) const -> StepSystem {
    const auto cells = build_cells(s);
    StepSystem sys;
    fill_vectors(cells, tau, sys);
    return sys;
  }
  // Scatters a solution vector into a state.
  [[nodiscard]] auto unpack(const Eigen::VectorXd& z, double time) const -> CurveState {
    CurveState s(mesh_, basis_);
    s.time = time;
    for (int j = 0; j < mesh_.cells(); ++j) {
      for (int a = 0; a < basis_.size(); ++a) {
        s.mu.coeff(j, a) = z[dof(j, MU, a)];
        s.X[0].coeff(j, a) = z[dof(j, X1, a)];
        s.X[1].coeff(j, a) = z[dof(j, X2, a)];
        s.q[0].coeff(j, a) = z[dof(j, Q1, a)];
        s.q[1].coeff(j, a) = z[dof(j, Q2, a)];
        s.xi[0].coeff(j, a) = z[dof(j, XI1, a)];
        s.xi[1].coeff(j, a) = z[dof(j, XI2, a)];
      }
    }
    return s;
  }

 private:
  auto step_sparse(const CurveState& s, double tau) -> StepResult {
    attempt_ = StepInfo{};
    attempt_.tau = tau;
    attempt_.backend = SolverBackend::Sparse;
    StepInfo& info = attempt_;
    StepSystem sys = assemble(s, tau);
    factorize(sys.matrix);
    info.pivot_ratio = pivot_ratio_;
    Eigen::VectorXd z = lu_->solve(sys.rhs);
    if (params_.flow == FlowKind::APCSF) {
      // (A + u w^T) z = b by Sherman-Morrison, reusing the factorization of A.
      const Eigen::VectorXd v = lu_->solve(sys.column);
      const double denom = 1.0 + sys.row.dot(v);
      info.sm_denominator = denom;
      check_denominator(denom);
      z -= v * (sys.row.dot(z) / denom);
      const Eigen::VectorXd r = sys.matrix * z + sys.column * sys.row.dot(z) - sys.rhs;
      info.residual = r.lpNorm<Eigen::Infinity>() / std::max(sys.rhs.lpNorm<Eigen::Infinity>(), 1e-300);
    } else {
      const Eigen::VectorXd r = sys.matrix * z - sys.rhs;
      info.residual = r.lpNorm<Eigen::Infinity>() / std::max(sys.rhs.lpNorm<Eigen::Infinity>(), 1e-300);
    }
    if (!z.allFinite()) { throw DivergenceError("step produced non-finite coefficients"); }

    StepResult out{unpack(z, s.time + tau), info};
    out.info.time = out.state.time;
    return out;
  }

  // Returns nothing when the block elimination is not trustworthy; the caller then uses SparseLU.
  auto step_block(const CurveState& s, double tau) -> std::optional<StepResult> {
    const auto cells = build_cells(s);
    StepSystem sys;
    fill_vectors(cells, tau, sys);
    factorize_block(cells, tau);
    const double pr = block_.pivot_ratio();
    if (!(pr >= params_.pivot_tolerance)) { return std::nullopt; }

    StepInfo info;
    info.tau = tau;
    info.pivot_ratio = pr;
    info.backend = SolverBackend::Block;
    Eigen::VectorXd z = solve_refined(cells, tau, sys.rhs);
    if (params_.flow == FlowKind::APCSF) {
      const Eigen::VectorXd v = solve_refined(cells, tau, sys.column);
      const double denom = 1.0 + sys.row.dot(v);
      info.sm_denominator = denom;
      attempt_ = info;
      // A bad denominator here may be an artifact of the block elimination; SparseLU decides.
      if (!(std::abs(denom) >= 1e-14)) { return std::nullopt; }
      z -= v * (sys.row.dot(z) / denom);
    }
    Eigen::VectorXd r = apply_cells(cells, tau, z) - sys.rhs;
    if (params_.flow == FlowKind::APCSF) { r += sys.column * sys.row.dot(z); }
    info.residual = r.lpNorm<Eigen::Infinity>() / std::max(sys.rhs.lpNorm<Eigen::Infinity>(), 1e-300);
    if (!z.allFinite() || !(info.residual <= 1e-9)) { return std::nullopt; }

    StepResult out{unpack(z, s.time + tau), info};
    out.info.time = out.state.time;
    return out;
  }

  static void check_denominator(double denom) {
    if (!(std::abs(denom) >= 1e-14)) {
      throw SingularUpdateError("Sherman-Morrison denominator " + detail::sci(denom) + " below 1e-14");
    }
  }

  [[nodiscard]] auto build_cells(const CurveState& s) const -> std::vector<detail::CellOperator> {
    const int N = mesh_.cells();
    const int nb = basis_.size();
    const std::size_t nq = table_.points();
    const auto frozen = detail::freeze_geometry(s, table_, params_.anisotropy, q_floor_for(s));
    const auto& wq = table_.rule.weights;
    std::vector<detail::CellOperator> cells(static_cast<std::size_t>(N));
    for (int j = 0; j < N; ++j) {
      const detail::FrozenPoint* fp = &frozen[static_cast<std::size_t>(j) * nq];
      auto& c = cells[static_cast<std::size_t>(j)];
      c.mn1 = detail::Block::Zero(nb, nb);
      c.mn2 = detail::Block::Zero(nb, nb);
      c.mq = detail::Block::Zero(nb, nb);
      c.k = detail::Block::Zero(2 * nb, 2 * nb);
      c.xn = detail::BlockVector::Zero(nb);
      c.qa = detail::BlockVector::Zero(nb);
      for (std::size_t qp = 0; qp < nq; ++qp) {
        const auto& f = fp[qp];
        for (int a = 0; a < nb; ++a) {
          const double wa = wq[qp] * table_.at(qp, a);
          c.xn[a] += wa * f.xdotn;
          c.qa[a] += wa * f.Q;
          for (int b = 0; b < nb; ++b) {
            const double pp = wa * table_.at(qp, b);
            c.mn1(a, b) += pp * f.nstar.x();
            c.mn2(a, b) += pp * f.nstar.y();
            c.mq(a, b) += pp * f.Q;
            c.k(a, b) += pp * f.gamma / f.Q;
            c.k(a, nb + b) -= pp * f.dgamma / f.Q;
            c.k(nb + a, b) += pp * f.dgamma / f.Q;
            c.k(nb + a, nb + b) += pp * f.gamma / f.Q;
          }
        }
      }
      c.mq_inv = c.mq.inverse();
    }
    return cells;
  }

  void fill_vectors(const std::vector<detail::CellOperator>& cells, double tau, StepSystem& sys) const {
    const Eigen::Index n = dofs();
    const double hh = 0.5 * mesh_.h();
    sys.rhs = Eigen::VectorXd::Zero(n);
    sys.column = Eigen::VectorXd::Zero(n);
    sys.row = Eigen::VectorXd::Zero(n);
    double length = 0.0;
    for (int j = 0; j < mesh_.cells(); ++j) {
      const auto& c = cells[static_cast<std::size_t>(j)];
      for (int a = 0; a < basis_.size(); ++a) {
        sys.rhs[dof(j, MU, a)] = hh * c.xn[a];
        sys.column[dof(j, MU, a)] = -tau * hh * c.qa[a];
        sys.row[dof(j, MU, a)] = hh * c.qa[a];
      }
      // phi_0 is the constant 1/sqrt(2).
      length += hh * std::sqrt(2.0) * c.qa[0];
    }
    sys.row /= length;
  }

  // Constant element matrices: D_ab = int phi_a' phi_b, traces L_a = phi_a(-1), R_a = phi_a(1).
  [[nodiscard]] auto element() const -> std::tuple<detail::Block, detail::BlockVector, detail::BlockVector> {
    const int nb = basis_.size();
    detail::Block D(nb, nb);
    detail::BlockVector L(nb);
    detail::BlockVector R(nb);
    for (int a = 0; a < nb; ++a) {
      L[a] = table_.left[static_cast<std::size_t>(a)];
      R[a] = table_.right[static_cast<std::size_t>(a)];
      for (int b = 0; b < nb; ++b) { D(a, b) = D_[static_cast<std::size_t>(a * nb + b)]; }
    }
    return {D, L, R};
  }

  static auto blockdiag(const detail::Block& m) -> detail::Block {
    const auto nb = m.rows();
    detail::Block out = detail::Block::Zero(2 * nb, 2 * nb);
    out.topLeftCorner(nb, nb) = m;
    out.bottomRightCorner(nb, nb) = m;
    return out;
  }

  // Reduced X-operator after eliminating q, xi and mu cellwise:
  //   q_j  = B0 X_j + B1 X_{j+1} + f_q / hh
  //   xi_j = K_j q_j + f_xi / hh
  //   mu_j = Mq^{-1} (f_mu - hh Nm X_j) / (tau hh),  Nm = [Mn1 Mn2]
  void factorize_block(const std::vector<detail::CellOperator>& cells, double tau) {
    const int N = mesh_.cells();
    const int nb = basis_.size();
    const double hh = 0.5 * mesh_.h();
    const auto [D, L, R] = element();
    const detail::Block B0 = blockdiag(-(D + L * L.transpose()) / hh);
    const detail::Block B1 = blockdiag(R * L.transpose() / hh);
    const detail::Block E = blockdiag(-D + R * R.transpose());
    const detail::Block F = blockdiag(-L * R.transpose());
    const detail::Block Pd = blockdiag(alpha_ * (R * R.transpose() + L * L.transpose()));
    const detail::Block Pu = blockdiag(alpha_ * R * L.transpose());
    const detail::Block Pl = blockdiag(alpha_ * L * R.transpose());
    std::vector<detail::Block> lower(static_cast<std::size_t>(N));
    std::vector<detail::Block> diag(static_cast<std::size_t>(N));
    std::vector<detail::Block> upper(static_cast<std::size_t>(N));
    for (int j = 0; j < N; ++j) {
      const auto& c = cells[static_cast<std::size_t>(j)];
      const auto& cp = cells[static_cast<std::size_t>(mesh_.wrap(j - 1))];
      detail::Block nm(nb, 2 * nb);
      nm << c.mn1, c.mn2;
      const detail::Block EK = E.lazyProduct(c.k);
      const detail::Block FK = F.lazyProduct(cp.k);
      diag[static_cast<std::size_t>(j)] =
          -(hh / tau) * nm.transpose().lazyProduct(detail::Block(c.mq_inv.lazyProduct(nm))) +
          EK.lazyProduct(B0) + FK.lazyProduct(B1) - Pd;
      upper[static_cast<std::size_t>(j)] = EK.lazyProduct(B1) + Pu;
      lower[static_cast<std::size_t>(j)] = FK.lazyProduct(B0) + Pl;
    }
    block_.factorize(lower, diag, upper);
  }

  [[nodiscard]] auto gather(const Eigen::VectorXd& v, int j, int field) const -> detail::BlockVector {
    const int nb = basis_.size();
    return v.segment(dof(j, field, 0), nb);
  }
  [[nodiscard]] auto gather2(const Eigen::VectorXd& v, int j, int field) const -> detail::BlockVector {
    const int nb = basis_.size();
    detail::BlockVector out(2 * nb);
    out << v.segment(dof(j, field, 0), nb), v.segment(dof(j, field + 1, 0), nb);
    return out;
  }
  void scatter2(Eigen::VectorXd& v, int j, int field, const detail::BlockVector& x) const {
    const int nb = basis_.size();
    v.segment(dof(j, field, 0), nb) = x.head(nb);
    v.segment(dof(j, field + 1, 0), nb) = x.tail(nb);
  }

  // Solves the CSF step operator for an arbitrary right-hand side f with the block factorization.
  [[nodiscard]] auto solve_block(const std::vector<detail::CellOperator>& cells, double tau,
                                 const Eigen::VectorXd& f) const -> Eigen::VectorXd {
    const int N = mesh_.cells();
    const int nb = basis_.size();
    const double hh = 0.5 * mesh_.h();
    const auto [D, L, R] = element();
    const detail::Block B0 = blockdiag(-(D + L * L.transpose()) / hh);
    const detail::Block B1 = blockdiag(R * L.transpose() / hh);
    const detail::Block E = blockdiag(-D + R * R.transpose());
    const detail::Block F = blockdiag(-L * R.transpose());
    std::vector<detail::BlockVector> aux(static_cast<std::size_t>(N));  // K_j f_q + f_xi, scaled by 1/hh
    for (int j = 0; j < N; ++j) {
      aux[static_cast<std::size_t>(j)] =
          (cells[static_cast<std::size_t>(j)].k * gather2(f, j, Q1) + gather2(f, j, XI1)) / hh;
    }
    std::vector<detail::BlockVector> b(static_cast<std::size_t>(N));
    for (int j = 0; j < N; ++j) {
      const auto& c = cells[static_cast<std::size_t>(j)];
      detail::Block nm(nb, 2 * nb);
      nm << c.mn1, c.mn2;
      b[static_cast<std::size_t>(j)] = gather2(f, j, X1) - nm.transpose() * (c.mq_inv * gather(f, j, MU)) / tau -
                                       E * aux[static_cast<std::size_t>(j)] -
                                       F * aux[static_cast<std::size_t>(mesh_.wrap(j - 1))];
    }
    const auto x = block_.solve(std::move(b));
    Eigen::VectorXd z = Eigen::VectorXd::Zero(dofs());
    for (int j = 0; j < N; ++j) {
      const auto& c = cells[static_cast<std::size_t>(j)];
      const auto& xj = x[static_cast<std::size_t>(j)];
      const auto& xn = x[static_cast<std::size_t>(mesh_.wrap(j + 1))];
      detail::Block nm(nb, 2 * nb);
      nm << c.mn1, c.mn2;
      scatter2(z, j, X1, xj);
      const detail::BlockVector q = B0 * xj + B1 * xn + gather2(f, j, Q1) / hh;
      scatter2(z, j, Q1, q);
      scatter2(z, j, XI1, c.k * q + gather2(f, j, XI1) / hh);
      z.segment(dof(j, MU, 0), nb) = c.mq_inv * (gather(f, j, MU) - hh * nm * xj) / (tau * hh);
    }
    return z;
  }

  // Block solve followed by a few steps of iterative refinement against the full operator.
  [[nodiscard]] auto solve_refined(const std::vector<detail::CellOperator>& cells, double tau,
                                   const Eigen::VectorXd& f) const -> Eigen::VectorXd {
    Eigen::VectorXd z = solve_block(cells, tau, f);
    const double fn = std::max(f.lpNorm<Eigen::Infinity>(), 1e-300);
    for (int it = 0; it < 2; ++it) {
      const Eigen::VectorXd r = f - apply_cells(cells, tau, z);
      if (!r.allFinite() || r.lpNorm<Eigen::Infinity>() <= 1e-13 * fn) { break; }
      z += solve_block(cells, tau, r);
    }
    return z;
  }

  // Matrix-free product with the unscaled full step operator (rank-one term excluded).
  [[nodiscard]] auto apply_cells(const std::vector<detail::CellOperator>& cells, double tau,
                                 const Eigen::VectorXd& z) const -> Eigen::VectorXd {
    const int N = mesh_.cells();
    const int nb = basis_.size();
    const double hh = 0.5 * mesh_.h();
    const auto [D, L, R] = element();
    const detail::Block E = -D + R * R.transpose();
    const detail::Block F = -L * R.transpose();
    const detail::Block Dq = D + L * L.transpose();
    const detail::Block Uq = -R * L.transpose();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dofs());
    for (int j = 0; j < N; ++j) {
      const auto& c = cells[static_cast<std::size_t>(j)];
      const int jm = mesh_.wrap(j - 1);
      const int jp = mesh_.wrap(j + 1);
      const detail::BlockVector mu = gather(z, j, MU);
      out.segment(dof(j, MU, 0), nb) =
          hh * (c.mn1 * gather(z, j, X1) + c.mn2 * gather(z, j, X2)) + tau * hh * (c.mq * mu);
      const detail::BlockVector q = gather2(z, j, Q1);
      const detail::BlockVector xi = gather2(z, j, XI1);
      scatter2(out, j, XI1, hh * (xi - c.k * q));
      for (int d = 0; d < 2; ++d) {
        const detail::BlockVector x = gather(z, j, X1 + d);
        const detail::BlockVector xp = gather(z, jp, X1 + d);
        const detail::BlockVector xm = gather(z, jm, X1 + d);
        const detail::Block& mn = d == 0 ? c.mn1 : c.mn2;
        out.segment(dof(j, X1 + d, 0), nb) =
            hh * (mn * mu) + E * gather(z, j, XI1 + d) + F * gather(z, jm, XI1 + d) -
            alpha_ * (R * (R.dot(x)) + L * (L.dot(x))) + alpha_ * R * (L.dot(xp)) + alpha_ * L * (R.dot(xm));
        out.segment(dof(j, Q1 + d, 0), nb) = hh * gather(z, j, Q1 + d) + Dq * x + Uq * xp;
      }
    }
    return out;
  }

  void factorize(const Eigen::SparseMatrix<double>& A) {
    if (!analyzed_) {
      lu_->analyzePattern(A);
      analyzed_ = true;
    }
    lu_->factorize(A);
    if (lu_->info() != Eigen::Success) {
      attempt_.pivot_ratio = 0.0;
      throw WellPosednessError("step matrix is singular (" + lu_->lastErrorMessage() +
                               "); the frozen normals may all be parallel to one direction");
    }
    const auto [lo, hi] = lu_->pivot_range();
    pivot_ratio_ = hi > 0.0 ? lo / hi : 0.0;
    attempt_.pivot_ratio = pivot_ratio_;
    if (!(pivot_ratio_ >= params_.pivot_tolerance)) {
      throw WellPosednessError("step matrix is numerically singular: pivot ratio " + detail::sci(pivot_ratio_) +
                               " below tolerance; the frozen normals may all be parallel to one direction");
    }
  }

  Mesh mesh_;
  Basis basis_;
  FlowParams params_;
  BasisTable table_;
  double alpha_;
  std::vector<double> D_;
  std::optional<double> q_floor_;
  std::unique_ptr<detail::PivotSparseLU> lu_;
  bool analyzed_ = false;
  detail::CyclicBlockSolver block_;
  double pivot_ratio_ = 1.0;
  StepInfo attempt_;
};

// Initial state: X0 projected, q0 from the discrete derivative, xi0 = projection of G q0 / Q0, mu0 = 0.
// mu0 is never read by the scheme.
inline auto init_state(const CurveFunction& curve, const Mesh& mesh, const Basis& basis, const FlowParams& params)
    -> CurveState {
  CurveState s(mesh, basis);
  s.X = l2_project(curve, mesh, basis, resolve_quad_points(params, basis));
  s.q = discrete_derivative(s.X);
  const BasisTable table(basis, resolve_quad_points(params, basis));
  const double floor = params.q_floor.value_or(1e-12 * discrete_length(s, static_cast<int>(table.points())));
  for (int j = 0; j < mesh.cells(); ++j) {
    for (std::size_t qp = 0; qp < table.points(); ++qp) {
      Vec2 qv = Vec2::Zero();
      for (int a = 0; a < table.nb; ++a) {
        qv.x() += s.q[0].coeff(j, a) * table.at(qp, a);
        qv.y() += s.q[1].coeff(j, a) * table.at(qp, a);
      }
      const double Q = qv.norm();
      if (!(Q > floor)) {
        throw PositivityError("degenerate initial parameterization: Q = " + detail::sci(Q) + " in cell " +
                              std::to_string(j));
      }
      const Vec2 flux = g_matrix(params.anisotropy, std::atan2(qv.y(), qv.x())) * qv / Q;
      for (int a = 0; a < table.nb; ++a) {
        s.xi[0].coeff(j, a) += table.rule.weights[qp] * flux.x() * table.at(qp, a);
        s.xi[1].coeff(j, a) += table.rule.weights[qp] * flux.y() * table.at(qp, a);
      }
    }
  }
  return s;
}

inline auto step_csf(const CurveState& state, FlowParams params) -> CurveState {
  params.flow = FlowKind::CSF;
  Stepper stepper(state.mesh(), state.basis(), std::move(params));
  return stepper.step(state).state;
}

inline auto step_apcsf(const CurveState& state, FlowParams params) -> CurveState {
  params.flow = FlowKind::APCSF;
  Stepper stepper(state.mesh(), state.basis(), std::move(params));
  return stepper.step(state).state;
}

// Thrown by run(): carries the last state that was computed successfully.
class RunAborted : public Error {
 public:
  RunAborted(const Error& cause, CurveState last, long step, StepInfo last_info, StepInfo failed_info = {})
      : Error(cause.what()),
        cause_kind_(cause.kind()),
        last_(std::move(last)),
        step_(step),
        info_(last_info),
        failed_(failed_info) {}
  [[nodiscard]] auto kind() const -> const char* override { return cause_kind_.c_str(); }
  [[nodiscard]] auto last_state() const noexcept -> const CurveState& { return last_; }
  [[nodiscard]] auto last_time() const noexcept -> double { return last_.time; }
  // Index of the step that failed (1-based).
  [[nodiscard]] auto failed_step() const noexcept -> long { return step_; }
  [[nodiscard]] auto last_info() const noexcept -> const StepInfo& { return info_; }
  // Residual, pivot ratio and rank-one denominator of the failing attempt, as far as it got.
  [[nodiscard]] auto failed_info() const noexcept -> const StepInfo& { return failed_; }

 private:
  std::string cause_kind_;
  CurveState last_;
  long step_;
  StepInfo info_;
  StepInfo failed_;
};

using StepObserver = std::function<void(const CurveState&, const StepInfo&)>;

// Number of steps needed to reach T; the last one is shortened to land on T exactly.
inline auto step_count(double final_time, double tau) -> long {
  if (final_time <= 0.0) { return 0; }
  const double r = final_time / tau;
  const auto n = static_cast<long>(std::ceil(r - 1e-9 * std::max(1.0, r)));
  return std::max(n, 1L);
}

inline auto run(const CurveState& initial, const FlowParams& params, const StepObserver& observer = {}) -> CurveState {
  const long steps = step_count(params.final_time, params.tau);
  if (steps == 0) { return initial; }
  Stepper stepper(initial.mesh(), initial.basis(), params);
  stepper.set_q_floor(stepper.q_floor_for(initial));
  CurveState current = initial;
  const double t0 = initial.time;
  StepInfo last_info;
  for (long m = 0; m < steps; ++m) {
    const double tau = m + 1 == steps ? (t0 + params.final_time) - current.time : params.tau;
    try {
      auto result = stepper.step(current, tau);
      if (m + 1 == steps) { result.state.time = t0 + params.final_time; }
      result.info.step = m + 1;
      result.info.time = result.state.time;
      current = std::move(result.state);
      last_info = result.info;
      if (observer) { observer(current, last_info); }
    } catch (const RunAborted&) {
      throw;
    } catch (const Error& e) {
      StepInfo failed = stepper.last_attempt();
      failed.step = m + 1;
      failed.time = current.time + tau;
      throw RunAborted(e, current, m + 1, last_info, failed);
    }
  }
  return current;
}

}  // namespace ldgcurve
