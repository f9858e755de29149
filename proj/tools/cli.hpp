#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nse::cli {

// Exit codes of the `nse` binary.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;     // failed checks, I/O errors, anything unexpected
inline constexpr int kExitValidation = 2;  // bad flags, manifests, shapes, tensor files
inline constexpr int kExitNumerical = 3;   // singular or ill-conditioned systems

/// Run the command line `args` (without the program name). Machine-readable
/// summaries go to `out`, human diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nse::cli
