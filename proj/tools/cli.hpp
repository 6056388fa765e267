#pragma once

#include <iosfwd>

namespace gain::cli {

enum ExitCode : int { ok = 0, internal = 1, usage = 2, data = 3, numeric = 4 };

/// Parses argv and runs one subcommand. The last stdout line is a JSON
/// summary; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gain::cli
