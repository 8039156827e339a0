#pragma once

#include <sstream>
#include <string>

namespace crl {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

// process-wide log level, initialised from CONTOUR_RL_LOG on first use
// (error|warn|info|debug, default info)
LogLevel log_level();
void set_log_level(LogLevel lvl);

void log_line(LogLevel lvl, const std::string& msg);

#define CRL_LOG(lvl, expr)                                     \
  do {                                                         \
    if (static_cast<int>(lvl) <= static_cast<int>(::crl::log_level())) { \
      std::ostringstream oss__;                                \
      oss__ << expr;                                           \
      ::crl::log_line(lvl, oss__.str());                       \
    }                                                          \
  } while (0)

#define CRL_INFO(expr) CRL_LOG(::crl::LogLevel::info, expr)
#define CRL_WARN(expr) CRL_LOG(::crl::LogLevel::warn, expr)
#define CRL_ERROR(expr) CRL_LOG(::crl::LogLevel::error, expr)
#define CRL_DEBUG(expr) CRL_LOG(::crl::LogLevel::debug, expr)

}  // namespace crl
