#pragma once

// Mesh-refinement studies: errors in manifold distance at the final time and observed orders.

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ldgcurve/curves.hpp"
#include "ldgcurve/diagnostics.hpp"
#include "ldgcurve/error.hpp"
#include "ldgcurve/flow_solver.hpp"
#include "ldgcurve/io.hpp"
#include "ldgcurve/polygon.hpp"

namespace ldgcurve {

// ln(e1/e2) / ln(N2/N1); a log2 ratio when N doubles.
inline auto observed_order(double e1, double e2, int n1, int n2) -> double {
  if (!(e1 > 0.0) || !(e2 > 0.0)) { throw InvalidArgument("observed_order: errors must be positive"); }
  if (n2 <= n1) { throw InvalidArgument("observed_order: cell counts must increase"); }
  return std::log(e1 / e2) / std::log(static_cast<double>(n2) / n1);
}

struct ConvergenceRow {
  int cells = 0;
  double tau = 0.0;
  double error = 0.0;
  std::optional<double> order;  // empty on the first row
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  bool complete = true;    // false when a run failed; rows then hold the runs before it
  std::string failure;
};

// Fills the order column from consecutive rows.
inline void compute_orders(ConvergenceReport& report) {
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    report.rows[i].order.reset();
    if (i > 0) {
      const auto& a = report.rows[i - 1];
      report.rows[i].order = observed_order(a.error, report.rows[i].error, a.cells, report.rows[i].cells);
    }
  }
}

enum class Truth { Exact, Reference };

struct StudyConfig {
  CurveSpec curve = CurveSpec::circle();
  FlowParams params;  // tau is replaced by the tau rule
  int degree = 1;
  std::vector<int> cells;
  double tau_rule_C = 5.0;
  Truth truth = Truth::Exact;
  ReferenceOptions reference;
  int points_per_cell = 300;
};

inline auto rule_tau(double C, int cells, int degree) -> double {
  return C * std::pow(1.0 / cells, degree + 1);
}

inline auto convergence_study(const StudyConfig& cfg) -> ConvergenceReport {
  if (cfg.cells.size() < 2) { throw InvalidArgument("convergence_study: need at least two meshes"); }
  for (std::size_t i = 1; i < cfg.cells.size(); ++i) {
    if (cfg.cells[i] <= cfg.cells[i - 1]) { throw InvalidArgument("convergence_study: N list must increase strictly"); }
  }
  if (!(cfg.tau_rule_C > 0.0)) { throw InvalidArgument("convergence_study: tau-rule constant must be positive"); }
  const double T = cfg.params.final_time;

  std::optional<Polygon> reference;
  if (cfg.truth == Truth::Exact) {
    const bool ok = cfg.curve.kind() == CurveKind::Circle && cfg.curve.params()[0] == 1.0 &&
                    cfg.params.flow == FlowKind::CSF && cfg.params.anisotropy.kind() == AnisotropyModel::Kind::LFold &&
                    cfg.params.anisotropy.beta() == 0.0;
    if (!ok) { throw InvalidArgument("convergence_study: the exact solution covers isotropic CSF of the unit circle"); }
  } else {
    const int max_cells = cfg.cells.back();
    reference = reference_solution(cfg.curve, cfg.params, cfg.reference, max_cells,
                                   rule_tau(cfg.tau_rule_C, max_cells, cfg.degree));
  }

  ConvergenceReport report;
  for (int N : cfg.cells) {
    FlowParams p = cfg.params;
    p.tau = rule_tau(cfg.tau_rule_C, N, cfg.degree);
    try {
      const Mesh mesh(N);
      const Basis basis(cfg.degree);
      const CurveState final_state = run(init_state(cfg.curve.function(), mesh, basis, p), p);
      const Polygon computed = sample_polygon(final_state, cfg.points_per_cell);
      const Polygon truth = reference ? *reference : exact_circle_polygon(T, mesh, cfg.points_per_cell);
      report.rows.push_back({N, p.tau, manifold_distance(computed, truth).value, std::nullopt});
    } catch (const Error& e) {
      report.complete = false;
      report.failure = "N = " + std::to_string(N) + ": " + e.what();
      break;
    }
  }
  compute_orders(report);
  return report;
}

inline void write_report_csv(std::ostream& os, const ConvergenceReport& report) {
  os << "N,tau,error,order\n";
  for (const auto& r : report.rows) {
    os << r.cells << ',' << format_double(r.tau) << ',' << format_double(r.error) << ','
       << (r.order ? format_double(*r.order) : "") << '\n';
  }
}

inline auto format_report(const ConvergenceReport& report) -> std::string {
  std::ostringstream os;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%6s  %12s  %8s\n", "N", "error", "order");
  os << buf;
  for (const auto& r : report.rows) {
    if (r.order) {
      std::snprintf(buf, sizeof buf, "%6d  %12.3e  %8.2f\n", r.cells, r.error, *r.order);
    } else {
      std::snprintf(buf, sizeof buf, "%6d  %12.3e  %8s\n", r.cells, r.error, "-");
    }
    os << buf;
  }
  if (!report.complete) { os << "incomplete: " << report.failure << '\n'; }
  return os.str();
}

}  // namespace ldgcurve
