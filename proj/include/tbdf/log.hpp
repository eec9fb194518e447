#pragma once

#include <ostream>
#include <string>

#include <json.hpp>

// JSON-lines logging to stderr: {"level":..., "event":..., ...fields}.
namespace tbdf::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

void set_level(Level level);
Level level();
Level parse_level(const std::string& s);
/// Redirects output (tests); nullptr restores stderr.
void set_sink(std::ostream* sink);

void emit(Level level, const std::string& event, const nlohmann::json& fields = nlohmann::json::object());

inline void debug(const std::string& event, const nlohmann::json& fields = nlohmann::json::object()) {
    if (level() <= Level::debug) emit(Level::debug, event, fields);
}
inline void info(const std::string& event, const nlohmann::json& fields = nlohmann::json::object()) {
    emit(Level::info, event, fields);
}
inline void warn(const std::string& event, const nlohmann::json& fields = nlohmann::json::object()) {
    emit(Level::warn, event, fields);
}
inline void error(const std::string& event, const nlohmann::json& fields = nlohmann::json::object()) {
    emit(Level::error, event, fields);
}

}  // namespace tbdf::log
