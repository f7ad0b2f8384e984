#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nfer::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

/// Entry point shared by the `nfer` binary and the tests. `args` excludes the
/// program name. Subcommands: gen-data, inject-noise, train, evaluate,
/// report, sweep.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nfer::cli
