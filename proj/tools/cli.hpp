#pragma once

#include <iosfwd>

namespace brakenet::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kDataError = 3,
  kNumerical = 4,
};

// Entry point shared by the executable and the tests. Messages go to `out`,
// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace brakenet::cli
