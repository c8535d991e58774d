#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hct::cli {

enum ExitCode : int {
  kSuccess = 0,
  kValidationFailure = 1,
  kRuntimeFailure = 2,
};

/// Runs one `hct` invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hct::cli
