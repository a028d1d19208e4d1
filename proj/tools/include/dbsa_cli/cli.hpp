#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dbsa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPartial = 3;
inline constexpr int kExitFailure = 4;

/// Runs the dbsa command line. args excludes the program name. Reports go to
/// `out` unless an output path is given; logs and diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dbsa::cli
