#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace squq::cli {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kSuccess = 0,
  kSelfCheckFailed = 1,
  kUsageOrValidation = 2,
  kExternalService = 3,
};

/// Parses argv and dispatches to a subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace squq::cli
