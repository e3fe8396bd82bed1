#pragma once

#include <string>
#include <vector>

namespace segens::cli {

// Exit-code contract: 0 success, 1 usage error, 2 validation error,
// 3 internal error.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInternal = 3;

/// Runs one CLI invocation; args excludes the program name.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

} // namespace segens::cli
