#pragma once

// Command-line front end: convert, evaluate, optimize, coverage.
//
// Exit codes: 0 success, 1 invalid arguments or input, 2 runtime or solver failure.
// The seed comes from --seed, then the CF_DRO_SEED environment variable, then 0.

#include <iosfwd>
#include <string>
#include <vector>

namespace cfdro {

/// "cfdro <version> (<git revision>)"
std::string version_string();

/// args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace cfdro
