#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace irpo {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitDiverged = 2,
  kExitConfigError = 3,
};

// Entry point for the `irpo` tool: generate, train, eval, compare, gradcheck,
// estimator-check.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace irpo
