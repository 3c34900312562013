#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bnnp/errors.hpp"

namespace bnnp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;  // bad arguments or configuration
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumerical = 4;

int exit_code_for(ErrorKind kind);

// Relative output paths land under $BNNP_OUTPUT_ROOT when it is set.
std::string resolve_output_path(const std::string& path);

// Parses and runs one command (args exclude the program name); reports on
// `out` and `err` and returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bnnp
