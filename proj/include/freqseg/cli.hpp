#pragma once

#include <stdexcept>
#include <string>

namespace freqseg::cli {

/// Bad flags or config contents; reported with exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Entry point of the `freqseg` executable. Returns 0 on success, 1 on a
/// usage error and 2 on a runtime failure; diagnostics go to stderr.
int run(int argc, char** argv);

}  // namespace freqseg::cli
