#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vnt::cli {

enum ExitCode : int {
  kOk = 0,
  kVerifyFailed = 1,
  kDataError = 2,
  kCheckpointError = 3,
  kUsage = 64,
};

/// Runs one `vnt` command. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vnt::cli
