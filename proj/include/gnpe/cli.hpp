#pragma once

// Command-line front end: simulate | train | infer | evaluate | reproduce.
//
// Exit codes:
//   0  success
//   1  unexpected internal error
//   2  I/O error (missing input, unwritable output)
//   3  invalid configuration or command line
//   4  training diverged
//   5  GNPE did not converge under the JS policy (outputs are still written)

#include <iosfwd>
#include <string>
#include <vector>

namespace gnpe {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitTraining = 4;
inline constexpr int kExitConvergence = 5;

/// Runs one command. `args` excludes the program name. Progress goes to
/// `log`, errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& log, std::ostream& err);

}  // namespace gnpe
