#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tts::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Entry point behind the `tts` binary. `args` excludes the program name.
/// Machine-readable output goes to `out`, human summaries and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tts::cli
