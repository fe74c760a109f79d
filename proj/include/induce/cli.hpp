#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace induce {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Runs one subcommand. args excludes the program name. Normal output goes to
// out, usage text and error messages to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Sends log output to stderr at the level named by INDUCE_LOG (default info).
void configure_logging();

}  // namespace induce
