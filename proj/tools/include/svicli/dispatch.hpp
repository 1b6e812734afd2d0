#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace svi::cli {

// Runs one tool invocation: parses the command line, executes the chosen
// subcommand, writes the result document to `out` and diagnostics to `err`.
// Returns the process exit code: 0 on success, 1 on domain errors (a JSON
// error object goes to `err`), 2 on usage errors.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Same, from already-split arguments (excluding the program name).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace svi::cli
