#include "rest/core/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace rest::log {
namespace {

std::atomic<Level> g_level{Level::kInfo};
std::atomic<std::size_t> g_warnings{0};
std::mutex g_mutex;

void emit(Level at, const char* tag, const std::string& message) {
  if (at < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[" << tag << "] " << message << "\n";
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level.load(); }

void info(const std::string& message) { emit(Level::kInfo, "info", message); }

void warning(const std::string& message) {
  ++g_warnings;
  emit(Level::kWarning, "warn", message);
}

void error(const std::string& message) { emit(Level::kError, "error", message); }

std::size_t warning_count() { return g_warnings.load(); }
void reset_warning_count() { g_warnings = 0; }

}  // namespace rest::log
