#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace detkit {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

// Verbosity comes from the DETKIT_LOG environment variable
// (debug | info | warn | error); everything goes to standard error.
inline LogLevel log_threshold() {
    static const LogLevel level = [] {
        const char* env = std::getenv("DETKIT_LOG");
        if (!env) return LogLevel::info;
        const std::string v(env);
        if (v == "debug") return LogLevel::debug;
        if (v == "warn") return LogLevel::warn;
        if (v == "error") return LogLevel::error;
        return LogLevel::info;
    }();
    return level;
}

inline void log(LogLevel level, const std::string& message) {
    if (level < log_threshold()) return;
    static const char* names[] = {"debug", "info", "warn", "error"};
    std::cerr << "[" << names[int(level)] << "] " << message << "\n";
}

}  // namespace detkit
