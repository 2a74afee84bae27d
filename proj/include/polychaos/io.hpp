#pragma once

#include <cstdio>
#include <string>

namespace polychaos {

/// Round-trip exact decimal rendering used by every CSV writer.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace polychaos
