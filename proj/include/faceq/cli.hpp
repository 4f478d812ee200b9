#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace faceq {

inline constexpr const char* kToolkitVersion = "1.0.0";

enum ExitCode : int { kExitOk = 0, kExitDataError = 1, kExitUsage = 2 };

/// Runs the `faceq` command line. `args` excludes the program name. The
/// one-line summary goes to `out`; every diagnostic goes to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace faceq
