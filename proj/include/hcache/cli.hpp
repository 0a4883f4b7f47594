// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace hcache {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitInfeasible = 4;

/// Entry point of the `hcache` tool. Failures print one JSON object
/// {"error": kind, "message": text} on `err` and return the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hcache
