#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace adists::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Runs one command line (without the program name). Results go to `out`;
/// diagnostics and the one-line "error[kind]: message" go to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace adists::cli
