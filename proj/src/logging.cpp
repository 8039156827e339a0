#include "contourrl/logging.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace crl {

namespace {

LogLevel parse_env_level() {
  const char* env = std::getenv("CONTOUR_RL_LOG");
  if (!env) return LogLevel::info;
  if (std::strcmp(env, "error") == 0) return LogLevel::error;
  if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
  if (std::strcmp(env, "info") == 0) return LogLevel::info;
  if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
  return LogLevel::info;
}

LogLevel g_level = parse_env_level();

const char* level_name(LogLevel lvl) {
  switch (lvl) {
    case LogLevel::error: return "error";
    case LogLevel::warn: return "warn";
    case LogLevel::info: return "info";
    case LogLevel::debug: return "debug";
  }
  return "?";
}

}  // namespace

LogLevel log_level() { return g_level; }

void set_log_level(LogLevel lvl) { g_level = lvl; }

void log_line(LogLevel lvl, const std::string& msg) {
  std::fprintf(stderr, "[%s] %s\n", level_name(lvl), msg.c_str());
}

}  // namespace crl
