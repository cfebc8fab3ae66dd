#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace adareg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Parses `args` (without the program name) and runs the subcommand.
// Errors are reported on `err` as one line starting with
// "error[usage]", "error[validation]" or "error[runtime]".
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace adareg::cli
