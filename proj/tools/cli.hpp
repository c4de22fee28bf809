#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ergodic::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line `args` (without the program name). Reports go to the
/// output file or `out`; summaries and errors go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ergodic::cli
