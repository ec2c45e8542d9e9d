#pragma once

// File formats: JSON state snapshots, diagnostics series CSV, polygon CSV and SVG snapshots.
// Every real number is written with 17 significant digits so that a round trip is bit-exact.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldgcurve/diagnostics.hpp"
#include "ldgcurve/error.hpp"
#include "ldgcurve/flow_solver.hpp"
#include "ldgcurve/polygon.hpp"

namespace ldgcurve {

inline auto format_double(double v) -> std::string {
  if (std::isnan(v)) { return "nan"; }
  if (std::isinf(v)) { return v > 0 ? "inf" : "-inf"; }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// JSON numbers cannot be nan/inf; those become null.
inline auto json_number(double v) -> std::string { return std::isfinite(v) ? format_double(v) : "null"; }

// = State snapshots ===============================================================================
namespace detail {

inline void write_coeffs(std::ostream& os, const DGScalarField& f, int cell) {
  os << '[';
  for (int a = 0; a < f.basis().size(); ++a) {
    if (a > 0) { os << ','; }
    os << json_number(f.coeff(cell, a));
  }
  os << ']';
}

inline void write_vector_field(std::ostream& os, const char* name, const DGVectorField& f) {
  os << "  \"" << name << "\": [";
  for (int j = 0; j < f.mesh().cells(); ++j) {
    os << (j > 0 ? ",\n    [" : "\n    [");
    write_coeffs(os, f[0], j);
    os << ',';
    write_coeffs(os, f[1], j);
    os << ']';
  }
  os << "\n  ]";
}

inline void read_coeffs(const nlohmann::json& arr, DGScalarField& f, int cell) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != f.basis().size()) {
    throw ConfigError("state file: cell " + std::to_string(cell) + " has the wrong number of coefficients");
  }
  for (int a = 0; a < f.basis().size(); ++a) { f.coeff(cell, a) = arr[static_cast<std::size_t>(a)].get<double>(); }
}

inline void read_vector_field(const nlohmann::json& doc, const char* name, DGVectorField& f) {
  const auto& arr = doc.at(name);
  if (!arr.is_array() || static_cast<int>(arr.size()) != f.mesh().cells()) {
    throw ConfigError(std::string("state file: field '") + name + "' does not match the mesh");
  }
  for (int j = 0; j < f.mesh().cells(); ++j) {
    const auto& cell = arr[static_cast<std::size_t>(j)];
    if (!cell.is_array() || cell.size() != 2) { throw ConfigError("state file: vector cell entries need 2 arrays"); }
    read_coeffs(cell[0], f[0], j);
    read_coeffs(cell[1], f[1], j);
  }
}

}  // namespace detail

// Layout: {"mesh": {"N", "k"}, "time", "X": [[x coeffs, y coeffs] per cell], "q", "xi", "mu": [coeffs per cell]}
inline void write_state_json(std::ostream& os, const CurveState& s) {
  os << "{\n  \"mesh\": {\"N\": " << s.mesh().cells() << ", \"k\": " << s.basis().degree() << "},\n";
  os << "  \"time\": " << json_number(s.time) << ",\n";
  detail::write_vector_field(os, "X", s.X);
  os << ",\n";
  detail::write_vector_field(os, "q", s.q);
  os << ",\n";
  detail::write_vector_field(os, "xi", s.xi);
  os << ",\n  \"mu\": [";
  for (int j = 0; j < s.mesh().cells(); ++j) {
    os << (j > 0 ? ",\n    " : "\n    ");
    detail::write_coeffs(os, s.mu, j);
  }
  os << "\n  ]\n}\n";
}

inline auto state_to_json(const CurveState& s) -> std::string {
  std::ostringstream os;
  write_state_json(os, s);
  return os.str();
}

inline auto state_from_json(const std::string& text) -> CurveState {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("state file is not valid JSON: ") + e.what());
  }
  try {
    const Mesh mesh(doc.at("mesh").at("N").get<int>());
    const Basis basis(doc.at("mesh").at("k").get<int>());
    CurveState s(mesh, basis);
    s.time = doc.at("time").get<double>();
    detail::read_vector_field(doc, "X", s.X);
    detail::read_vector_field(doc, "q", s.q);
    detail::read_vector_field(doc, "xi", s.xi);
    const auto& mu = doc.at("mu");
    if (!mu.is_array() || static_cast<int>(mu.size()) != mesh.cells()) {
      throw ConfigError("state file: field 'mu' does not match the mesh");
    }
    for (int j = 0; j < mesh.cells(); ++j) { detail::read_coeffs(mu[static_cast<std::size_t>(j)], s.mu, j); }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("state file is malformed: ") + e.what());
  }
}

inline void save_state(const std::string& path, const CurveState& s) {
  std::ofstream out(path);
  if (!out) { throw ConfigError("cannot write '" + path + "'"); }
  write_state_json(out, s);
}

inline auto load_state(const std::string& path) -> CurveState {
  std::ifstream in(path);
  if (!in) { throw ConfigError("cannot read '" + path + "'"); }
  std::ostringstream ss;
  ss << in.rdbuf();
  return state_from_json(ss.str());
}

// = Diagnostics series ============================================================================
// Header t,Wc,W1,W2,A,dA,Psi followed by the normalized energies Wc/Wc0, W1/Wc0, W2/Wc0.
class SeriesWriter {
 public:
  explicit SeriesWriter(std::ostream& os) : os_(os) {
    os_ << "t,Wc,W1,W2,A,dA,Psi,Wc/Wc0,W1/Wc0,W2/Wc0\n";
  }

  void write(const DiagnosticsRecord& r) {
    if (!wc0_) { wc0_ = r.Wc; }
    const double w0 = *wc0_;
    os_ << format_double(r.t) << ',' << format_double(r.Wc) << ',' << format_double(r.W1) << ','
        << format_double(r.W2) << ',' << format_double(r.A) << ',' << format_double(r.dA) << ','
        << format_double(r.Psi) << ',' << format_double(r.Wc / w0) << ',' << format_double(r.W1 / w0) << ','
        << format_double(r.W2 / w0) << '\n';
  }

 private:
  std::ostream& os_;
  std::optional<double> wc0_;
};

// = Polygons ======================================================================================
inline void write_polygon_csv(std::ostream& os, const std::vector<Vec2>& pts) {
  os << "x,y\n";
  for (const auto& p : pts) { os << format_double(p.x()) << ',' << format_double(p.y()) << '\n'; }
}

inline void save_polygon_csv(const std::string& path, const std::vector<Vec2>& pts) {
  std::ofstream out(path);
  if (!out) { throw ConfigError("cannot write '" + path + "'"); }
  write_polygon_csv(out, pts);
}

inline auto read_polygon_csv(std::istream& in) -> std::vector<Vec2> {
  std::vector<Vec2> pts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) { continue; }
    for (auto& c : line) {
      if (c == ',') { c = ' '; }
    }
    std::istringstream ss(line);
    double x = 0.0, y = 0.0;
    if (!(ss >> x >> y)) {
      if (pts.empty()) { continue; }
      throw ConfigError("malformed polygon row: '" + line + "'");
    }
    pts.emplace_back(x, y);
  }
  return pts;
}

// = SVG ===========================================================================================
struct SvgLayer {
  std::vector<Vec2> points;
  std::string stroke = "#1f4e9c";
  bool dashed = false;
};

inline void write_svg(std::ostream& os, const std::vector<SvgLayer>& layers, const std::string& caption = {}) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& l : layers) {
    for (const auto& p : l.points) {
      xmin = std::min(xmin, p.x());
      xmax = std::max(xmax, p.x());
      ymin = std::min(ymin, p.y());
      ymax = std::max(ymax, p.y());
    }
  }
  if (!(xmax > xmin)) { xmin = -1, xmax = 1; }
  if (!(ymax > ymin)) { ymin = -1, ymax = 1; }
  const double pad = 0.05 * std::max(xmax - xmin, ymax - ymin);
  const double w = xmax - xmin + 2 * pad;
  const double h = ymax - ymin + 2 * pad;
  const double stroke = 0.004 * std::max(w, h);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"" << static_cast<int>(600 * h / w)
     << "\" viewBox=\"" << format_double(xmin - pad) << ' ' << format_double(-(ymax + pad)) << ' ' << format_double(w)
     << ' ' << format_double(h) << "\">\n";
  os << "<rect x=\"" << format_double(xmin - pad) << "\" y=\"" << format_double(-(ymax + pad)) << "\" width=\""
     << format_double(w) << "\" height=\"" << format_double(h) << "\" fill=\"white\"/>\n";
  for (const auto& l : layers) {
    os << "<polygon fill=\"none\" stroke=\"" << l.stroke << "\" stroke-width=\"" << format_double(stroke) << '"';
    if (l.dashed) { os << " stroke-dasharray=\"" << format_double(4 * stroke) << ' ' << format_double(3 * stroke) << '"'; }
    os << " points=\"";
    // y is flipped so that the picture has the usual orientation.
    for (const auto& p : l.points) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6g,%.6g ", p.x(), -p.y());
      os << buf;
    }
    os << "\"/>\n";
  }
  if (!caption.empty()) {
    os << "<text x=\"" << format_double(xmin) << "\" y=\"" << format_double(-(ymax + 0.4 * pad))
       << "\" font-size=\"" << format_double(0.03 * h) << "\" font-family=\"sans-serif\">" << caption << "</text>\n";
  }
  os << "</svg>\n";
}

inline void save_svg(const std::string& path, const std::vector<SvgLayer>& layers, const std::string& caption = {}) {
  std::ofstream out(path);
  if (!out) { throw ConfigError("cannot write '" + path + "'"); }
  write_svg(out, layers, caption);
}

}  // namespace ldgcurve
