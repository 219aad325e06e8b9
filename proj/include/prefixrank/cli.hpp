#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prefixrank::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point behind the `prefixrank` executable. Returns 0 on success, 1 on
/// a usage error (unknown flag, missing required flag, bad value) and 2 when a
/// subcommand fails at runtime. Every successful subcommand writes
/// `<out>.manifest.json` next to its main output.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Version string recorded in manifests.
std::string version();

}  // namespace prefixrank::cli
