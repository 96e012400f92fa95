#ifndef HPROBE_CLI_HPP_
#define HPROBE_CLI_HPP_

#include <ostream>

namespace hprobe {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Entry point for `hprobe <gen|train|eval|layer-search|ablate> [options]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hprobe

#endif  // HPROBE_CLI_HPP_
