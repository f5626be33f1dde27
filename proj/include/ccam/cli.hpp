#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ccam {

inline constexpr const char* kOutDirEnv = "CCAM_OUT_DIR";

/// Exit codes: 0 success, 2 bad config or arguments, 3 numeric failure,
/// 4 I/O failure, 1 anything else. Failures print one JSON line to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace ccam
