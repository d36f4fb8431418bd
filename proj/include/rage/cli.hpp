#pragma once

// Command-line front end. Subcommands: index, ask, explain, sample, optimal.
// Exit codes: 0 success, 1 input or data errors, 2 usage errors, 3 oracle
// failures, 4 analysis limits.

#include <ostream>
#include <string>
#include <vector>

#include "rage/error.hpp"

namespace rage::cli {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitOracle = 3;
constexpr int kExitLimits = 4;

int ExitCodeFor(ErrorCode code);

// `args` excludes the program name. `interactive` selects the default output
// format: table for terminals, json otherwise.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
           bool interactive);

}  // namespace rage::cli
