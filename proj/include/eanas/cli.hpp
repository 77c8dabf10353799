#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eanas {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

// Entry point shared by the `eanas` binary and the tests. `args` excludes the
// program name. Subcommands: synth, fit, search, scale, bench, report.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eanas
