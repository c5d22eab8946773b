#pragma once

#include <string>
#include <vector>

namespace mtgrr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Parses and runs one subcommand. Never throws.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace mtgrr::cli
