#pragma once

#include <cstdio>
#include <string>

namespace lmc {

/// Canonical float formatting for all text output: 9 significant digits.
inline std::string g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace lmc
