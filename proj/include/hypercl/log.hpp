#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace hypercl::log {

enum class Level { debug = 0, info = 1, warn = 2 };

/// Threshold from CONDCL_LOG (debug|info); warnings always print.
inline Level threshold() {
    static const Level level = [] {
        const char* env = std::getenv("CONDCL_LOG");
        if (env && std::string_view(env) == "debug") return Level::debug;
        if (env && std::string_view(env) == "info") return Level::info;
        return Level::warn;
    }();
    return level;
}

inline void write(Level level, std::string_view msg) {
    if (level < threshold()) return;
    static constexpr std::string_view names[] = {"debug", "info", "warn"};
    std::cerr << "[hypercl " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void debug(std::string_view msg) { write(Level::debug, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void warn(std::string_view msg) { write(Level::warn, msg); }

}  // namespace hypercl::log
