#pragma once

namespace nnstego {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitFormat = 3,
  kExitCapacity = 4,
  kExitIntegrity = 5,
};

int run_cli(int argc, char** argv);

}  // namespace nnstego
