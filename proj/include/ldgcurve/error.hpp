#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace ldgcurve {

// Base of every error the library throws. `kind()` is a stable machine-readable tag.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual auto kind() const -> const char* { return "error"; }
};

#define LDGCURVE_DEFINE_ERROR(Name, tag)                                            \
  class Name : public Error {                                                       \
   public:                                                                          \
    using Error::Error;                                                             \
    [[nodiscard]] auto kind() const -> const char* override { return tag; }         \
  }

LDGCURVE_DEFINE_ERROR(InvalidArgument, "invalid-argument");
LDGCURVE_DEFINE_ERROR(MeshError, "invalid-mesh");
LDGCURVE_DEFINE_ERROR(PositivityError, "q-positivity");
LDGCURVE_DEFINE_ERROR(WellPosednessError, "well-posedness");
LDGCURVE_DEFINE_ERROR(SingularUpdateError, "singular-update");
LDGCURVE_DEFINE_ERROR(DivergenceError, "divergence");
LDGCURVE_DEFINE_ERROR(GeometryError, "geometry");
LDGCURVE_DEFINE_ERROR(ExtinctionError, "extinction");
LDGCURVE_DEFINE_ERROR(ConfigError, "config");

#undef LDGCURVE_DEFINE_ERROR

namespace detail {
// Compact scientific notation for error messages (std::to_string prints tiny values as 0.000000).
inline auto sci(double v) -> std::string {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}
}  // namespace detail

}  // namespace ldgcurve
