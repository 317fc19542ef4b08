// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ping::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

/// Runs one subcommand (extract | train | eval | ablate). `args` excludes the
/// program name. Diagnostics go to `err` as a single line.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ping::cli
