#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mdssl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "MDSSL_OUT_DIR";

/// Entry point behind the `mdssl` executable. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdssl
