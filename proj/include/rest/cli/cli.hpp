#pragma once

#include <iosfwd>

namespace rest {

// Subcommands: synth, train, eval, ablate, inspect. Returns the process exit
// code: 0 ok, 2 config error, 3 data error, 4 numeric failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rest
