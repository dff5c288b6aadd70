#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace socbal {

enum class LogLevel : int { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

inline std::atomic<int>& log_level_slot() {
    static std::atomic<int> level = [] {
        const char* env = std::getenv("SOCBAL_LOG");
        if (!env) return static_cast<int>(LogLevel::Warn);
        if (!strcmp(env, "debug")) return static_cast<int>(LogLevel::Debug);
        if (!strcmp(env, "info")) return static_cast<int>(LogLevel::Info);
        if (!strcmp(env, "warn")) return static_cast<int>(LogLevel::Warn);
        if (!strcmp(env, "error")) return static_cast<int>(LogLevel::Error);
        if (!strcmp(env, "off")) return static_cast<int>(LogLevel::Off);
        return static_cast<int>(LogLevel::Warn);
    }();
    return level;
}

inline void set_log_level(LogLevel level) { log_level_slot() = static_cast<int>(level); }

inline void log_line(LogLevel level, const char* tag, const std::string& msg) {
    if (static_cast<int>(level) < log_level_slot()) return;
    fprintf(stderr, "[socbal %s] %s\n", tag, msg.c_str());
}

inline void log_debug(const std::string& msg) { log_line(LogLevel::Debug, "debug", msg); }
inline void log_info(const std::string& msg) { log_line(LogLevel::Info, "info", msg); }
inline void log_warn(const std::string& msg) { log_line(LogLevel::Warn, "warn", msg); }
inline void log_error(const std::string& msg) { log_line(LogLevel::Error, "error", msg); }

} // namespace socbal
