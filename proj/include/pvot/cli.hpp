#pragma once

#include <iosfwd>

namespace pvot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitUnreliable = 3;

/// Entry point of the `pvot` tool. Commands: test-funcform, test-garch,
/// test-break, mc, local-power, paths, cache.
int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pvot::cli
