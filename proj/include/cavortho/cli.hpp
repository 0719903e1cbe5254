#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cavortho::cli {

/// Runs the command line `args` (args[0] is the program name) and returns
/// the process exit status: 0 success, 2 validation, 3 numeric divergence,
/// 4 IO. Diagnostics go to `err` as one "<ErrorCode>: message" line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cavortho::cli
