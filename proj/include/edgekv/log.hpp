#pragma once

#include <string>

namespace edgekv {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

// Minimum level printed to stderr. Defaults to Warn so test output stays
// quiet; the CLI raises it to Info.
void set_log_level(LogLevel level);
LogLevel log_level();

void log_line(LogLevel level, const std::string& component, const std::string& msg);

inline void log_debug(const std::string& c, const std::string& m) {
  log_line(LogLevel::Debug, c, m);
}
inline void log_info(const std::string& c, const std::string& m) {
  log_line(LogLevel::Info, c, m);
}
inline void log_warn(const std::string& c, const std::string& m) {
  log_line(LogLevel::Warn, c, m);
}
inline void log_error(const std::string& c, const std::string& m) {
  log_line(LogLevel::Error, c, m);
}

}  // namespace edgekv
