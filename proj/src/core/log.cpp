#include "latsep/log.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>

namespace latsep {

namespace {

LogLevel initial_level() {
  const char* env = std::getenv("LATSEP_LOG");
  if (!env) return LogLevel::info;
  if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
  if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
  if (std::strcmp(env, "error") == 0) return LogLevel::error;
  if (std::strcmp(env, "quiet") == 0) return LogLevel::quiet;
  return LogLevel::info;
}

std::atomic<LogLevel> g_level{initial_level()};
std::mutex g_mutex;

void emit(LogLevel level, const char* tag, std::string_view msg) {
  if (level < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[" << tag << "] " << msg << '\n';
}

}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level.load(); }

void log_debug(std::string_view msg) { emit(LogLevel::debug, "debug", msg); }
void log_info(std::string_view msg) { emit(LogLevel::info, "info", msg); }
void log_warn(std::string_view msg) { emit(LogLevel::warn, "warn", msg); }
void log_error(std::string_view msg) { emit(LogLevel::error, "error", msg); }

}  // namespace latsep
