#pragma once

#include <string_view>

namespace irpo {

enum class LogLevel { kQuiet = 0, kError, kWarn, kInfo, kDebug };

// Read once from IRPO_LOG (quiet|error|warn|info|debug); defaults to warn.
LogLevel log_level();
void log(LogLevel level, std::string_view message);

}  // namespace irpo
