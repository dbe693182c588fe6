#include "edgekv/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <mutex>

namespace edgekv {

namespace {

LogLevel g_level = [] {
  const char* env = std::getenv("EDGEKV_LOG");
  if (!env) return LogLevel::Warn;
  std::string v = env;
  if (v == "debug") return LogLevel::Debug;
  if (v == "info") return LogLevel::Info;
  if (v == "warn") return LogLevel::Warn;
  if (v == "error") return LogLevel::Error;
  if (v == "off") return LogLevel::Off;
  return LogLevel::Warn;
}();

std::mutex g_mutex;

const char* level_name(LogLevel l) {
  switch (l) {
    case LogLevel::Debug: return "DEBUG";
    case LogLevel::Info: return "INFO";
    case LogLevel::Warn: return "WARN";
    case LogLevel::Error: return "ERROR";
    default: return "?";
  }
}

}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_line(LogLevel level, const std::string& component, const std::string& msg) {
  if (level < g_level) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::time_t t = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  std::fprintf(stderr, "%s %-5s [%s] %s\n", stamp, level_name(level),
               component.c_str(), msg.c_str());
}

}  // namespace edgekv
