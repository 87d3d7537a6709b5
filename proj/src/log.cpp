#include "irpo/log.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

namespace irpo {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("IRPO_LOG");
    const std::string v = env ? env : "";
    if (v == "quiet") return LogLevel::kQuiet;
    if (v == "error") return LogLevel::kError;
    if (v == "info") return LogLevel::kInfo;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

void log(LogLevel level, std::string_view message) {
  if (level == LogLevel::kQuiet || level > log_level()) return;
  static constexpr const char* kNames[] = {"", "error", "warn", "info", "debug"};
  std::cerr << "[" << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace irpo
