#include "tbdf/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

#include "tbdf/core.hpp"

namespace tbdf::log {

namespace {
std::atomic<Level> g_level{Level::warn};
std::ostream* g_sink = nullptr;
std::mutex g_mu;

const char* name(Level l) {
    switch (l) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        case Level::error: return "error";
        case Level::off: return "off";
    }
    return "?";
}
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

Level parse_level(const std::string& s) {
    for (auto l : {Level::debug, Level::info, Level::warn, Level::error, Level::off}) {
        if (s == name(l)) return l;
    }
    throw ConfigError("unknown log level: " + s);
}

void set_sink(std::ostream* sink) {
    std::lock_guard lock(g_mu);
    g_sink = sink;
}

void emit(Level level, const std::string& event, const nlohmann::json& fields) {
    if (level < g_level.load()) return;
    nlohmann::json rec = {{"level", name(level)}, {"event", event}};
    if (fields.is_object()) {
        for (const auto& [k, v] : fields.items()) rec[k] = v;
    }
    std::lock_guard lock(g_mu);
    std::ostream& out = g_sink ? *g_sink : std::cerr;
    out << rec.dump() << '\n';
}

}  // namespace tbdf::log
