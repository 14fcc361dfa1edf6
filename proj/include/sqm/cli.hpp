#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sqm {

/// Entry point of the `sqm` tool. Returns the process exit code: 0 success,
/// 2 usage or configuration error, 3 data or format error, 4 training failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience overload; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sqm
