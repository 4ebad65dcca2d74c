#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pf {

// Parses argv-style tokens (program name excluded) and runs one command:
// train, lr-find, eval, ensemble, or gen-synth. All output goes to `out`.
// Returns the process exit code: 0 success, 1 usage error, 2 data/format/io
// error, 3 numeric divergence. Usage errors never leave partial output files.
int run_cli(std::vector<std::string> args, std::ostream& out);

}  // namespace pf
