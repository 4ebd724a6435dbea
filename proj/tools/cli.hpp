#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dfa::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericError = 4 };

/// Runs the command line `args` (args[0] is the program name) with the
/// given streams. Never throws; failures map to exit codes.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace dfa::cli
