// Command-line front end: single runs, convergence studies and Wulff shapes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ldgcurve/ldgcurve.hpp"

namespace {

using namespace ldgcurve;

// Options shared by `run` and `convergence`, kept as text until validation.
struct CommonOptions {
  std::string curve = "ellipse";
  std::string curve_file;
  std::string flow = "csf";
  double beta = 0.0;
  int fold = 4;
  int degree = 1;
  std::optional<double> tau;
  std::optional<double> tau_rule_C;
  std::string alpha = "1/h";
  double final_time = 1.0;
  int nq = 0;
  std::string out = "out";
};

void add_common(CLI::App& app, CommonOptions& o) {
  app.add_option("--curve", o.curve, "circle | ellipse | flower | mikula | custom, or 1..4");
  app.add_option("--curve-file", o.curve_file, "x,y point file for --curve custom");
  app.add_option("--flow", o.flow, "csf | apcsf");
  app.add_option("--beta", o.beta, "anisotropy strength in gamma = 1 + beta cos(l theta)");
  app.add_option("--fold", o.fold, "fold number l");
  app.add_option("--k", o.degree, "polynomial degree (1..4)");
  auto* tau = app.add_option("--tau", o.tau, "time step");
  auto* rule = app.add_option("--tau-rule-C", o.tau_rule_C, "time step C h^(k+1)");
  tau->excludes(rule);
  rule->excludes(tau);
  app.add_option("--alpha", o.alpha, "penalty coefficient, a number or 1/h");
  app.add_option("--T", o.final_time, "final time");
  app.add_option("--nq", o.nq, "Gauss points per cell (0: k + 3)");
  app.add_option("--out", o.out, "output directory");
  app.set_config("--config", "", "key = value configuration file; flags override it");
}

auto to_config(const CommonOptions& o) -> ExperimentConfig {
  ExperimentConfig c;
  c.curve = parse_curve_kind(o.curve);
  c.curve_file = o.curve_file;
  c.flow = parse_flow_kind(o.flow);
  c.beta = o.beta;
  c.fold = o.fold;
  c.degree = o.degree;
  c.tau = o.tau;
  c.tau_rule_C = o.tau_rule_C;
  c.alpha = parse_alpha(o.alpha);
  c.final_time = o.final_time;
  c.quad_points = o.nq;
  c.out_dir = o.out;
  return c;
}

void print_error_json(const Error& e) {
  write_error_json(std::cerr, e.kind(), e.what(), std::nullopt, std::nullopt, nullptr, nullptr);
}

auto run_command(const CommonOptions& o, int cells, int snap_every, bool svg, bool no_series) -> int {
  ExperimentConfig c;
  try {
    c = to_config(o);
  } catch (const Error& e) {
    print_error_json(e);
    return exit_code_for(e.kind());
  }
  c.cells = cells;
  c.snap_every = snap_every;
  c.svg = svg;
  c.series = !no_series;
  const auto r = run_experiment(c);
  if (r.exit_code != 0) {
    std::cerr << "error: " << r.message << '\n';
    if (std::filesystem::exists(std::filesystem::path(c.out_dir) / "error.json")) {
      std::cerr << "details in " << (std::filesystem::path(c.out_dir) / "error.json").string() << '\n';
    }
    return r.exit_code;
  }
  std::printf("%ld steps, t = %.6g, output in %s\n", r.steps, r.final_time, c.out_dir.c_str());
  return 0;
}

auto convergence_command(const CommonOptions& o, const std::vector<int>& cells, const std::string& truth,
                         const ReferenceOptions& ref) -> int {
  try {
    const ExperimentConfig c = to_config(o);
    if (c.tau) { throw ConfigError("convergence studies use --tau-rule-C, not --tau"); }
    StudyConfig s;
    s.curve = curve_spec(c);
    s.params = flow_params(c);
    s.degree = c.degree;
    s.cells = cells;
    s.tau_rule_C = c.tau_rule_C.value_or(5.0);
    if (truth == "exact") {
      s.truth = Truth::Exact;
    } else if (truth == "reference") {
      s.truth = Truth::Reference;
    } else {
      throw ConfigError("--truth must be exact or reference");
    }
    s.reference = ref;
    const auto report = convergence_study(s);
    std::filesystem::create_directories(c.out_dir);
    std::ofstream csv(std::filesystem::path(c.out_dir) / "convergence.csv");
    if (!csv) { throw ConfigError("cannot write convergence.csv in '" + c.out_dir + "'"); }
    write_report_csv(csv, report);
    std::cout << format_report(report);
    return report.complete ? 0 : 3;
  } catch (const Error& e) {
    print_error_json(e);
    return exit_code_for(e.kind());
  }
}

auto wulff_command(double beta, int fold, int samples, double area, const std::string& out) -> int {
  try {
    const auto model = AnisotropyModel::lfold(beta, fold);
    const auto regime = classify_regime(model);
    const Polygon shape = wulff_shape(model, samples, area);
    save_polygon_csv(out, shape.vertices());
    std::printf("regime %s, %zu vertices, area %.6g -> %s\n", to_string(regime.kind).c_str(), shape.size(),
                shape.area(), out.c_str());
    return 0;
  } catch (const Error& e) {
    print_error_json(e);
    return exit_code_for(e.kind());
  }
}

}  // namespace

auto main(int argc, char** argv) -> int {
  CLI::App app{"High-order LDG solver for isotropic and anisotropic curve-shortening flow"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  int cells = 80;
  int snap_every = 0;
  bool svg = false;
  bool no_series = false;
  auto* run = app.add_subcommand("run", "evolve one curve and write diagnostics");
  add_common(*run, run_opts);
  run->add_option("--N", cells, "number of cells");
  run->add_option("--snap-every", snap_every, "write snap_<step>.json every s steps (0: never)");
  run->add_flag("--svg", svg, "also render snapshots as SVG");
  run->add_flag("--no-series", no_series, "skip series.csv");

  CommonOptions conv_opts;
  conv_opts.curve = "circle";
  conv_opts.final_time = 0.25;
  std::vector<int> conv_cells{5, 10, 20, 40};
  std::string truth = "exact";
  ReferenceOptions ref;
  auto* conv = app.add_subcommand("convergence", "mesh-refinement study with tau = C h^(k+1)");
  add_common(*conv, conv_opts);
  conv->add_option("--N", conv_cells, "strictly increasing cell counts")->delimiter(',');
  conv->add_option("--truth", truth, "exact | reference");
  conv->add_option("--ref-N", ref.cells, "reference cells");
  conv->add_option("--ref-k", ref.degree, "reference degree");
  conv->add_option("--ref-tau", ref.tau, "reference time step");
  bool no_richardson = false;
  conv->add_flag("--no-richardson", no_richardson, "plain backward Euler reference");

  double wbeta = 0.05;
  int wfold = 4;
  int wsamples = 4096;
  double warea = std::numbers::pi;
  std::string wout = "wulff.csv";
  auto* wulff = app.add_subcommand("wulff", "Wulff shape of gamma = 1 + beta cos(l theta) as x,y CSV");
  wulff->add_option("--beta", wbeta, "anisotropy strength");
  wulff->add_option("--fold", wfold, "fold number");
  wulff->add_option("--samples", wsamples, "half-planes (>= 64)");
  wulff->add_option("--area", warea, "target area");
  wulff->add_option("--out", wout, "output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return 2;
  }

  if (*run) { return run_command(run_opts, cells, snap_every, svg, no_series); }
  if (*conv) {
    ref.richardson = !no_richardson;
    return convergence_command(conv_opts, conv_cells, truth, ref);
  }
  return wulff_command(wbeta, wfold, wsamples, warea, wout);
}
