#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace interconnect::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kDiverged = 3,
};

// Runs one command line (without the program name). Results go to `out`,
// diagnostics to `err`; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace interconnect::cli
