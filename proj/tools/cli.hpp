#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fpage {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

// args excludes the program name. Blocks for `clean review-serve`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fpage
