// SPDX-License-Identifier: Apache-2.0
//
// `tssl <verb>` dispatch. Exit codes: 0 success, 1 configuration or runtime
// failure, 2 usage error.

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tssl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable that overrides the run root directory.
inline constexpr const char* kRunRootEnv = "TSSL_RUN_ROOT";

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tssl::cli
