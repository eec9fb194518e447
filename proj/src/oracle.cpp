#include "tbdf/oracle.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "tbdf/io.hpp"

namespace tbdf {

using nlohmann::json;

namespace {

const char* kind_name(OracleKind k) {
    switch (k) {
        case OracleKind::ground_truth: return "ground_truth";
        case OracleKind::lookup_file: return "lookup_file";
        case OracleKind::remote_http: return "remote_http";
    }
    return "?";
}

OracleKind parse_kind(const std::string& s) {
    if (s == "ground_truth") return OracleKind::ground_truth;
    if (s == "lookup_file") return OracleKind::lookup_file;
    if (s == "remote_http") return OracleKind::remote_http;
    throw ConfigError("unknown oracle kind: " + s);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

void OracleConfig::validate() const {
    if (levels < 2) throw ConfigError("oracle levels must be >= 2");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (request_timeout.count() < 0 || backoff_base.count() < 0) throw ConfigError("durations must be >= 0");
    if (max_concurrency < 1) throw ConfigError("max_concurrency must be >= 1");
    switch (kind) {
        case OracleKind::ground_truth:
            if (labels_path.empty()) throw ConfigError("ground_truth oracle needs labels");
            break;
        case OracleKind::lookup_file:
            if (lookup_path.empty()) throw ConfigError("lookup_file oracle needs lookup");
            break;
        case OracleKind::remote_http:
            if (endpoint.empty()) throw ConfigError("remote_http oracle needs endpoint");
            if (chunks_path.empty()) throw ConfigError("remote_http oracle needs chunks");
            break;
    }
}

OracleConfig OracleConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    OracleConfig c;
    try {
        c.kind = parse_kind(j.at("kind").get<std::string>());
        c.levels = j.value("levels", c.levels);
        if (j.contains("labels")) c.labels_path = resolve(base_dir, j["labels"].get<std::string>());
        if (j.contains("lookup")) c.lookup_path = resolve(base_dir, j["lookup"].get<std::string>());
        c.endpoint = j.value("endpoint", std::string{});
        if (j.contains("prompt_template")) {
            c.prompt_template_path = resolve(base_dir, j["prompt_template"].get<std::string>());
        }
        if (j.contains("chunks")) c.chunks_path = resolve(base_dir, j["chunks"].get<std::string>());
        c.request_timeout = std::chrono::milliseconds(j.value("request_timeout_ms", c.request_timeout.count()));
        c.max_retries = j.value("max_retries", c.max_retries);
        c.backoff_base = std::chrono::milliseconds(j.value("backoff_ms", c.backoff_base.count()));
        c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
        c.token_env = j.value("token_env", c.token_env);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("oracle config: ") + e.what());
    }
    c.validate();
    return c;
}

json OracleConfig::to_json() const {
    json j = {{"kind", kind_name(kind)}, {"levels", levels}};
    if (!labels_path.empty()) j["labels"] = labels_path.generic_string();
    if (!lookup_path.empty()) j["lookup"] = lookup_path.generic_string();
    if (kind == OracleKind::remote_http) {
        j["endpoint"] = endpoint;
        j["chunks"] = chunks_path.generic_string();
        if (!prompt_template_path.empty()) j["prompt_template"] = prompt_template_path.generic_string();
        j["request_timeout_ms"] = request_timeout.count();
        j["max_retries"] = max_retries;
        j["backoff_ms"] = backoff_base.count();
        j["max_concurrency"] = max_concurrency;
        j["token_env"] = token_env;
    }
    return j;
}

GroundTruthOracle::GroundTruthOracle(std::unordered_map<std::string, double> labels, int levels)
    : labels_(std::move(labels)), levels_(levels) {
    if (levels_ < 2) throw ConfigError("oracle levels must be >= 2");
    for (const auto& [id, v] : labels_) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error("label outside [0,1] for " + id);
    }
}

OrdinalScore GroundTruthOracle::score(const std::string& chunk_id) {
    auto it = labels_.find(chunk_id);
    if (it == labels_.end()) throw UnknownChunk(chunk_id);
    return OrdinalScore::from_value(it->second, levels_);
}

LookupOracle::LookupOracle(std::unordered_map<std::string, int> table, int levels)
    : table_(std::move(table)), levels_(levels) {
    if (levels_ < 2) throw ConfigError("oracle levels must be >= 2");
    for (const auto& [id, lvl] : table_) {
        if (lvl < -1 || lvl > levels_ - 1) throw Error("lookup level out of range for " + id);
    }
}

OrdinalScore LookupOracle::score(const std::string& chunk_id) {
    auto it = table_.find(chunk_id);
    if (it == table_.end()) throw UnknownChunk(chunk_id);
    return OrdinalScore::from_level(it->second, levels_);
}

std::unique_ptr<QualityOracle> make_oracle(const OracleConfig& cfg) {
    cfg.validate();
    switch (cfg.kind) {
        case OracleKind::ground_truth: {
            std::unordered_map<std::string, double> labels;
            io::for_each_jsonl(cfg.labels_path, [&](const json& r) {
                labels[r.at("chunk_id").get<std::string>()] = r.at("label").get<double>();
            });
            return std::make_unique<GroundTruthOracle>(std::move(labels), cfg.levels);
        }
        case OracleKind::lookup_file: {
            std::unordered_map<std::string, int> table;
            io::for_each_jsonl(cfg.lookup_path, [&](const json& r) {
                table[r.at("chunk_id").get<std::string>()] = r.at("level").get<int>();
            });
            return std::make_unique<LookupOracle>(std::move(table), cfg.levels);
        }
        case OracleKind::remote_http: {
            std::unordered_map<std::string, std::string> texts;
            for (auto& c : io::read_chunks(cfg.chunks_path)) {
                if (c.text) texts.emplace(c.chunk_id, std::move(*c.text));
            }
            std::string prompt;
            if (!cfg.prompt_template_path.empty()) {
                std::ifstream in(cfg.prompt_template_path);
                if (!in) throw ConfigError("cannot open prompt template " + cfg.prompt_template_path.string());
                std::ostringstream ss;
                ss << in.rdbuf();
                prompt = ss.str();
            }
            return std::make_unique<RemoteHttpOracle>(cfg, std::move(texts), std::move(prompt));
        }
    }
    throw ConfigError("unsupported oracle kind");
}

json QueryLedger::to_json() const {
    json per_node = json::object();
    for (const auto& [id, n] : per_node_calls) per_node[std::to_string(id)] = n;
    return {{"total_calls", total_calls},
            {"unique_chunks", unique_chunks},
            {"failures", failures},
            {"per_node_calls", std::move(per_node)}};
}

OracleSession::OracleSession(QualityOracle& oracle, int max_concurrency)
    : oracle_(oracle), max_concurrency_(std::max(1, max_concurrency)) {}

OrdinalScore OracleSession::evaluate(const std::string& chunk_id, NodeId charge_to) {
    std::promise<OrdinalScore> promise;
    {
        std::unique_lock lock(mu_);
        if (auto it = cache_.find(chunk_id); it != cache_.end()) {
            auto fut = it->second;
            lock.unlock();
            return fut.get();
        }
        cache_.emplace(chunk_id, promise.get_future().share());
    }
    OrdinalScore s;
    try {
        s = oracle_.score(chunk_id);
    } catch (...) {
        {
            std::lock_guard lock(mu_);
            cache_.erase(chunk_id);
        }
        promise.set_exception(std::current_exception());
        throw;
    }
    {
        std::lock_guard lock(mu_);
        ++ledger_.total_calls;
        ++ledger_.unique_chunks;
        ++ledger_.per_node_calls[charge_to];
        if (s.failed()) ++ledger_.failures;
    }
    promise.set_value(s);
    return s;
}

std::vector<BatchItem> OracleSession::evaluate_batch(const std::vector<std::string>& chunk_ids, NodeId node_id) {
    if (chunk_ids.empty()) throw Error("evaluate_batch: empty batch");
    std::vector<BatchItem> out(chunk_ids.size());
    auto run_one = [&](std::size_t i) {
        try {
            out[i].score = evaluate(chunk_ids[i], node_id);
        } catch (const std::exception& e) {
            out[i].score = OrdinalScore::failure();
            out[i].error = e.what();
        }
    };

    const bool fan_out = oracle_.remote() && max_concurrency_ > 1 && chunk_ids.size() > 1;
    if (!fan_out) {
        for (std::size_t i = 0; i < chunk_ids.size(); ++i) run_one(i);
        return out;
    }
    // Duplicates inside the batch resolve through the shared cache entry.
    std::atomic<std::size_t> next{0};
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(max_concurrency_), chunk_ids.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < chunk_ids.size(); i = next++) run_one(i);
            });
        }
    }
    return out;
}

QueryLedger OracleSession::ledger() const {
    std::lock_guard lock(mu_);
    return ledger_;
}

}  // namespace tbdf
