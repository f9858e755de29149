#pragma once

#include <string_view>

namespace nse {

// Route spdlog's default logger to stderr at the level named by `level`
// (trace, debug, info, warn, error, off). An empty level falls back to the
// NSE_LOG environment variable, then to "warn".
void init_logging(std::string_view level = {});

}  // namespace nse
