#pragma once

#include <iosfwd>

namespace agm {

/// Exit statuses of the `agm` command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `agm` command, callable in-process. Normal output
/// goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace agm
