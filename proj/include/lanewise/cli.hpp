#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lanewise::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kMissingArtifact = 4,
  kValidationFailed = 5,
};

// Runs one command line (args excludes the program name) and returns its
// exit code. Data goes to `out`, diagnostics and progress to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lanewise::cli
