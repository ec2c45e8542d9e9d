#pragma once

// Single-run experiments: configuration, output files and exit codes.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

#include "ldgcurve/anisotropy.hpp"
#include "ldgcurve/curves.hpp"
#include "ldgcurve/diagnostics.hpp"
#include "ldgcurve/error.hpp"
#include "ldgcurve/flow_solver.hpp"
#include "ldgcurve/io.hpp"
#include "ldgcurve/polygon.hpp"

namespace ldgcurve {

struct ExperimentConfig {
  CurveKind curve = CurveKind::Ellipse;
  std::string curve_file;  // point file for CurveKind::Custom
  FlowKind flow = FlowKind::CSF;
  double beta = 0.0;
  int fold = 4;
  int degree = 1;
  int cells = 80;
  std::optional<double> tau;         // explicit step
  std::optional<double> tau_rule_C;  // or tau = C h^{k+1}
  std::optional<double> alpha;       // unset: 1/h
  double final_time = 1.0;
  int quad_points = 0;  // 0: k + 3
  std::string out_dir = "out";
  int snap_every = 0;  // 0: no snapshots
  bool svg = false;
  bool series = true;
  int points_per_cell = 300;
};

inline auto parse_flow_kind(const std::string& s) -> FlowKind {
  if (s == "csf" || s == "CSF") { return FlowKind::CSF; }
  if (s == "apcsf" || s == "APCSF" || s == "ap-csf" || s == "AP-CSF") { return FlowKind::APCSF; }
  throw ConfigError("unknown flow '" + s + "' (expected csf or apcsf)");
}

// A number, or the token 1/h (returned as nullopt and resolved once N is known).
inline auto parse_alpha(const std::string& s) -> std::optional<double> {
  if (s == "1/h") { return std::nullopt; }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) { throw ConfigError("alpha must be a number or 1/h, got '" + s + "'"); }
  if (!(v >= 0.0)) { throw ConfigError("alpha must be non-negative"); }
  return v;
}

inline void validate(const ExperimentConfig& c) {
  if (c.tau && c.tau_rule_C) { throw ConfigError("--tau and --tau-rule-C are mutually exclusive"); }
  if (c.tau && !(*c.tau > 0.0)) { throw ConfigError("tau must be positive"); }
  if (c.tau_rule_C && !(*c.tau_rule_C > 0.0)) { throw ConfigError("tau-rule constant must be positive"); }
  if (c.cells < 3) { throw ConfigError("N must be at least 3"); }
  if (c.degree < 1 || c.degree > 4) { throw ConfigError("k must be in 1..4"); }
  if (c.fold < 1) { throw ConfigError("fold must be positive"); }
  if (!std::isfinite(c.beta)) { throw ConfigError("beta must be finite"); }
  if (!(c.final_time >= 0.0)) { throw ConfigError("T must be non-negative"); }
  if (c.quad_points < 0 || c.quad_points > 20) { throw ConfigError("nq must be in 0..20"); }
  if (c.quad_points > 0 && c.quad_points < c.degree + 1) { throw ConfigError("nq must be at least k + 1"); }
  if (c.snap_every < 0) { throw ConfigError("snap-every must be non-negative"); }
  if (c.points_per_cell < 2) { throw ConfigError("points per cell must be at least 2"); }
  if (c.curve == CurveKind::Custom && c.curve_file.empty()) { throw ConfigError("custom curve needs a point file"); }
  if (c.alpha && !(*c.alpha >= 0.0)) { throw ConfigError("alpha must be non-negative"); }
}

inline auto resolved_tau(const ExperimentConfig& c) -> double {
  if (c.tau) { return *c.tau; }
  if (c.tau_rule_C) { return *c.tau_rule_C * std::pow(1.0 / c.cells, c.degree + 1); }
  return 1e-3;
}

inline auto flow_params(const ExperimentConfig& c) -> FlowParams {
  FlowParams p;
  p.flow = c.flow;
  p.tau = resolved_tau(c);
  p.alpha = c.alpha;
  p.final_time = c.final_time;
  p.anisotropy = AnisotropyModel::lfold(c.beta, c.fold);
  p.quad_points = c.quad_points;
  return p;
}

inline auto curve_spec(const ExperimentConfig& c) -> CurveSpec {
  if (c.curve == CurveKind::Custom) { return CurveSpec::custom(read_curve_csv(c.curve_file)); }
  return initial_curve(c.curve);
}

// 0 success, 2 configuration, 3 solver, 4 geometry or diagnostics.
inline auto exit_code_for(const char* kind) -> int {
  for (const char* k : {"config", "invalid-argument", "invalid-mesh"}) {
    if (std::strcmp(kind, k) == 0) { return 2; }
  }
  for (const char* k : {"q-positivity", "well-posedness", "singular-update", "divergence"}) {
    if (std::strcmp(kind, k) == 0) { return 3; }
  }
  return 4;
}

struct ExperimentResult {
  int exit_code = 0;
  long steps = 0;
  double final_time = 0.0;
  std::string message;
};

inline void write_error_json(std::ostream& os, const std::string& kind, const std::string& message,
                             std::optional<long> step, std::optional<double> last_valid_time,
                             const StepInfo* failed, const StepInfo* last) {
  nlohmann::json j;
  j["kind"] = kind;
  j["message"] = message;
  j["failed_step"] = step ? nlohmann::json(*step) : nlohmann::json(nullptr);
  j["last_valid_time"] = last_valid_time ? nlohmann::json(*last_valid_time) : nlohmann::json(nullptr);
  const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  if (failed) {
    j["failed_attempt"] = {{"time", num(failed->time)},
                           {"tau", num(failed->tau)},
                           {"residual", num(failed->residual)},
                           {"pivot_ratio", num(failed->pivot_ratio)},
                           {"sm_denominator", num(failed->sm_denominator)}};
  }
  if (last) {
    j["last_step"] = {{"step", last->step},
                      {"residual", num(last->residual)},
                      {"pivot_ratio", num(last->pivot_ratio)},
                      {"sm_denominator", num(last->sm_denominator)}};
  }
  os << j.dump(2) << '\n';
}

namespace detail {

inline auto open_out(const std::filesystem::path& p) -> std::ofstream {
  std::ofstream out(p);
  if (!out) { throw ConfigError("cannot write '" + p.string() + "'"); }
  return out;
}

inline void write_snapshot_svg(const std::filesystem::path& p, const CurveState& s, const AnisotropyModel& model,
                               bool overlay, int points_per_cell) {
  const Polygon poly = sample_polygon(s, points_per_cell);
  std::vector<SvgLayer> layers{{poly.vertices(), "#1f4e9c", false}};
  if (overlay) {
    const Polygon w = wulff_shape(model, 2048, std::abs(enclosed_area(s)));
    const Vec2 shift = centroid(poly);
    std::vector<Vec2> moved;
    for (const auto& v : w.vertices()) { moved.push_back(v + shift); }
    layers.push_back({std::move(moved), "#c0392b", true});
  }
  char caption[64];
  std::snprintf(caption, sizeof caption, "t = %.6g", s.time);
  save_svg(p.string(), layers, caption);
}

}  // namespace detail

inline auto run_experiment(const ExperimentConfig& cfg) -> ExperimentResult {
  namespace fs = std::filesystem;
  ExperimentResult result;
  const fs::path dir(cfg.out_dir);
  try {
    validate(cfg);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) { throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message()); }
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e.kind());
    result.message = e.what();
    return result;
  }

  std::optional<CurveState> last_good;
  try {
    const FlowParams params = flow_params(cfg);
    const CurveSpec spec = curve_spec(cfg);
    const Mesh mesh(cfg.cells);
    const Basis basis(cfg.degree);
    const CurveState init = init_state(spec.function(), mesh, basis, params);
    last_good = init;
    const double alpha = resolve_alpha(params, mesh);
    const double A0 = enclosed_area(init);
    const bool overlay = cfg.beta != 0.0;

    std::ofstream series_file;
    std::optional<SeriesWriter> series;
    if (cfg.series) {
      series_file = detail::open_out(dir / "series.csv");
      series.emplace(series_file);
    }
    const auto snapshot = [&](const CurveState& s, long step) {
      if (cfg.snap_every <= 0 || step % cfg.snap_every != 0) { return; }
      const std::string stem = "snap_" + std::to_string(step);
      save_state((dir / (stem + ".json")).string(), s);
      if (cfg.svg) { detail::write_snapshot_svg(dir / (stem + ".svg"), s, params.anisotropy, overlay, 40); }
    };
    if (series) { series->write(make_record(init, params.anisotropy, alpha, A0, cfg.quad_points)); }
    snapshot(init, 0);

    const CurveState final_state = run(init, params, [&](const CurveState& s, const StepInfo& info) {
      if (series) { series->write(make_record(s, params.anisotropy, alpha, A0, cfg.quad_points)); }
      snapshot(s, info.step);
      result.steps = info.step;
      last_good = s;
    });
    last_good = final_state;
    result.final_time = final_state.time;
    save_polygon_csv((dir / "final_polygon.csv").string(), sample_polygon(final_state, cfg.points_per_cell).vertices());
    if (cfg.svg) {
      detail::write_snapshot_svg(dir / "final.svg", final_state, params.anisotropy, overlay, 40);
    }
    return result;
  } catch (const RunAborted& e) {
    result.exit_code = exit_code_for(e.kind());
    result.message = e.what();
    result.steps = e.failed_step() - 1;
    result.final_time = e.last_time();
    std::ofstream out(dir / "error.json");
    write_error_json(out, e.kind(), e.what(), e.failed_step(), e.last_time(), &e.failed_info(),
                     e.failed_step() > 1 ? &e.last_info() : nullptr);
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e.kind());
    result.message = e.what();
    std::ofstream out(dir / "error.json");
    if (last_good) {
      write_error_json(out, e.kind(), e.what(), result.steps + 1, last_good->time, nullptr, nullptr);
    } else {
      write_error_json(out, e.kind(), e.what(), std::nullopt, std::nullopt, nullptr, nullptr);
    }
  }
  // Keep the last valid curve next to the error report.
  if (last_good) {
    try {
      save_polygon_csv((dir / "final_polygon.csv").string(),
                       sample_polygon(*last_good, cfg.points_per_cell).vertices());
    } catch (const Error&) {
    }
  }
  return result;
}

}  // namespace ldgcurve
