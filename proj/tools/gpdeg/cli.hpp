#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gpdeg::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kSamplingError = 4 };

/// Parses the command line and runs one subcommand: simulate, prior-check,
/// fit, cv or failure-time.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

/// Same, with the arguments that follow the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gpdeg::cli
