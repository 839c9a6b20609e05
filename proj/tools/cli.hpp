#pragma once

namespace splatsched::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitConstraint = 4;

/// Entry point of the `splatsched` tool. Returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace splatsched::cli
