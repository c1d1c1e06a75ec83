#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace a2clpt {

/// Exit codes of the command-line driver.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs `a2clpt <subcommand> [flags]`; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace a2clpt
