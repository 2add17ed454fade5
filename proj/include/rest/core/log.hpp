#pragma once

#include <string>

namespace rest::log {

enum class Level { kDebug, kInfo, kWarning, kError, kSilent };

void set_level(Level level);
Level level();

void info(const std::string& message);
void warning(const std::string& message);
void error(const std::string& message);

// Number of warnings emitted since start (or the last reset), including
// suppressed ones.
std::size_t warning_count();
void reset_warning_count();

}  // namespace rest::log
