#include "nse/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace nse {

void init_logging(std::string_view level) {
  std::string name(level);
  if (name.empty()) {
    if (const char* env = std::getenv("NSE_LOG")) name = env;
  }
  if (name.empty()) name = "warn";

  spdlog::drop("nse");
  auto logger = spdlog::stderr_color_mt("nse");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(name));
}

}  // namespace nse
