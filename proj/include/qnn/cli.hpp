#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qnn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// `args` excludes the program name. Commands: calibrate, train, eval,
// sweep-alpha, error-curves, lemma31, inspect-quant.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(const std::vector<std::string>& args);

}  // namespace qnn
