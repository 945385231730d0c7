#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace speclora::cli {

// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kUsage = 2,           // usage, IO, or format error
    kShapeMismatch = 3,
    kDivergence = 4,
    kVerificationFailed = 5,
};

/// Runs the command line (argv[0] is the program name). Human-readable output
/// goes to `out`, diagnostics to `err`; results are written to files.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Convenience wrapper for in-process callers; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace speclora::cli
