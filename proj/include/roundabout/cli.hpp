#pragma once

namespace roundabout {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point of the `roundabout` tool; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace roundabout
