// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace vaealign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDiverged = 3;

struct CommandResult {
  int exit_code = kExitOk;
  std::vector<std::filesystem::path> artifacts;
  std::string reason;  // one line, empty on success
};

// args excludes the program name. Non-zero results also print
// "error=<kind> <reason>" as a single line on err.
CommandResult run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vaealign::cli
