#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "tbdf/oracle.hpp"

namespace tbdf {

using nlohmann::json;

namespace {

std::optional<std::int64_t> find_score(const json& v, int depth);

std::optional<std::int64_t> find_score_in_text(const std::string& s, int depth) {
    const auto first = s.find('{');
    const auto last = s.rfind('}');
    if (first == std::string::npos || last == std::string::npos || last < first) return std::nullopt;
    const json inner = json::parse(s.substr(first, last - first + 1), nullptr, false);
    if (inner.is_discarded()) return std::nullopt;
    return find_score(inner, depth + 1);
}

std::optional<std::int64_t> find_score(const json& v, int depth) {
    if (depth > 8) return std::nullopt;
    if (v.is_object()) {
        if (auto it = v.find("quality_score"); it != v.end() && it->is_number_integer()) {
            return it->get<std::int64_t>();
        }
        for (const auto& [_, child] : v.items()) {
            if (auto s = find_score(child, depth + 1)) return s;
        }
    } else if (v.is_array()) {
        for (const auto& child : v) {
            if (auto s = find_score(child, depth + 1)) return s;
        }
    } else if (v.is_string()) {
        return find_score_in_text(v.get<std::string>(), depth);
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::int64_t> extract_quality_score(const std::string& body) {
    const json parsed = json::parse(body, nullptr, false);
    if (!parsed.is_discarded()) return find_score(parsed, 0);
    return find_score_in_text(body, 0);
}

RemoteHttpOracle::RemoteHttpOracle(OracleConfig cfg, std::unordered_map<std::string, std::string> texts,
                                   std::string prompt)
    : cfg_(std::move(cfg)), texts_(std::move(texts)), prompt_(std::move(prompt)) {
    cfg_.validate();
    const auto scheme_end = cfg_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + cfg_.endpoint);
    const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
    host_ = cfg_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
    if (const char* tok = std::getenv(cfg_.token_env.c_str())) token_ = tok;
}

std::optional<int> RemoteHttpOracle::attempt(const std::string& body) const {
    httplib::Client client(host_);
    const auto secs = cfg_.request_timeout.count() / 1000;
    const auto usecs = (cfg_.request_timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    auto res = client.Post(path_, headers, body, "application/json");
    if (!res || res->status < 200 || res->status >= 300) return std::nullopt;
    const auto score = extract_quality_score(res->body);
    if (!score || *score < 0 || *score > cfg_.levels - 1) return std::nullopt;
    return static_cast<int>(*score);
}

OrdinalScore RemoteHttpOracle::score(const std::string& chunk_id) {
    auto it = texts_.find(chunk_id);
    if (it == texts_.end()) throw UnknownChunk(chunk_id);
    const std::string body = json{{"text", prompt_.empty() ? it->second : prompt_ + "\n" + it->second}}.dump();

    auto wait = cfg_.backoff_base;
    for (int attempt_no = 0; attempt_no <= cfg_.max_retries; ++attempt_no) {
        if (attempt_no > 0) {
            std::this_thread::sleep_for(wait);
            wait *= 2;
        }
        if (auto level = attempt(body)) return OrdinalScore::from_level(*level, cfg_.levels);
    }
    return OrdinalScore::failure();
}

}  // namespace tbdf
