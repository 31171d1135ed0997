#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace moto::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInputError = 2,
  kNumericError = 3,
  kCompatibilityError = 4,
};

/// Runs one command. `args` excludes the program name. Results go to `out`,
/// diagnostics to `err`. Verbosity comes from the MOTO_LOG environment
/// variable: "quiet", "info" (default) or "debug".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace moto::cli
