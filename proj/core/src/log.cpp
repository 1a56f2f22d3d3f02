#include "gladcf/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace gladcf {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Warning};
std::mutex g_mutex;
}  // namespace

void set_log_level(LogLevel level) noexcept { g_level.store(level); }
LogLevel log_level() noexcept { return g_level.load(); }

void log(LogLevel level, std::string_view message) {
    if (level < g_level.load()) return;
    static constexpr const char* tags[] = {"debug", "info", "warning", "error"};
    std::lock_guard lock(g_mutex);
    std::cerr << "[" << tags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace gladcf
