#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace fedveca {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

// Verbosity comes from the FEDVECA_LOG environment variable
// (debug|info|warn|error|off); default is warn. Parsed once.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("FEDVECA_LOG");
    if (env == nullptr) return LogLevel::warn;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    if (std::strcmp(env, "info") == 0) return LogLevel::info;
    if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
    if (std::strcmp(env, "error") == 0) return LogLevel::error;
    if (std::strcmp(env, "off") == 0) return LogLevel::off;
    return LogLevel::warn;
  }();
  return level;
}

inline void logf(LogLevel level, const char* fmt, ...) {
  if (level < log_level()) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[fedveca %s] ", names[static_cast<int>(level)]);
  std::va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fputc('\n', stderr);
}

}  // namespace fedveca
