#pragma once

#include <iosfwd>

namespace tsasr {

/// Exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,       // runtime failure or a failed run inside an ablation
  kExitConfig = 2,        // usage, configuration or missing-input error
  kExitNonConvergence = 3,
  kExitGate = 4,          // an invariant gate failed (backbone checksum changed)
};

/// Runs one subcommand: gen-data | pretrain | tune | eval | ablate | count-params.
/// Diagnostics go to `err` as single lines prefixed with "tsasr: ".
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tsasr
