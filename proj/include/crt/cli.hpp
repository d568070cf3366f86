#pragma once

#include <iosfwd>

namespace crt {

/// Entry point of the `crt` tool. Returns the process exit code:
/// 0 success, 1 analysis error, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace crt
