#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace patchcraft {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs one command line, `args` excluding the program name, e.g.
// {"train", "--data", "soil", "--patch", "8"}. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace patchcraft
