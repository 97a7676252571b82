#pragma once

#include <iosfwd>

namespace taskaff::cli {

enum ExitCode : int {
  kOk = 0,
  kDomainError = 2,
  kTrainingError = 3,
  kUsage = 64,
  kMissingInput = 66,
};

// Parses argv, runs one subcommand and maps failures onto exit codes.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace taskaff::cli
