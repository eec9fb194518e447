#include "tbdf/pipeline.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <optional>

#include "tbdf/clustering.hpp"
#include "tbdf/io.hpp"
#include "tbdf/log.hpp"
#include "tbdf/oracle.hpp"

namespace tbdf::pipeline {

std::vector<std::string> whitespace_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

void ChunkingConfig::validate() const {
    if (token_limit < 1 || min_tokens < 1) throw ConfigError("token limits must be positive");
    if (token_limit <= min_tokens) throw ConfigError("token_limit must exceed min_tokens");
}

std::vector<Chunk> chunk_document(const std::string& doc_id, std::string_view text, const ChunkingConfig& cfg,
                                  const Tokenizer& tokenize) {
    cfg.validate();
    const auto tokens = tokenize(text);
    std::vector<Chunk> out;
    const auto limit = static_cast<std::size_t>(cfg.token_limit);
    for (std::size_t start = 0, ordinal = 0; start < tokens.size(); start += limit, ++ordinal) {
        const std::size_t end = std::min(tokens.size(), start + limit);
        if (static_cast<std::int64_t>(end - start) < cfg.min_tokens) continue;
        std::string joined;
        for (std::size_t t = start; t < end; ++t) {
            if (t > start) joined += ' ';
            joined += tokens[t];
        }
        out.push_back({doc_id + "#" + std::to_string(ordinal), doc_id, std::move(joined),
                       static_cast<std::int64_t>(end - start)});
    }
    return out;
}

ChunkingStats chunk_documents(const fs::path& docs, const fs::path& chunks_out, const fs::path& documents_out,
                              const ChunkingConfig& cfg, const Tokenizer& tokenize) {
    cfg.validate();
    ChunkingStats stats;
    std::vector<Chunk> all;
    std::vector<json> doc_records;
    io::for_each_jsonl(
        docs,
        [&](const json& r) {
            if (!r.is_object() || !r.contains("doc_id") || !r.contains("text") || !r["text"].is_string()) {
                throw Error("record needs doc_id and string text");
            }
            const auto& idv = r["doc_id"];
            const std::string doc_id = idv.is_string() ? idv.get<std::string>() : idv.dump();
            const auto& text = r["text"].get_ref<const std::string&>();
            auto chunks = chunk_document(doc_id, text, cfg, tokenize);
            const auto total_tokens = static_cast<std::int64_t>(tokenize(text).size());
            const std::int64_t full_slices = (total_tokens + cfg.token_limit - 1) / cfg.token_limit;
            stats.dropped_chunks += full_slices - static_cast<std::int64_t>(chunks.size());
            json ids = json::array();
            std::int64_t kept_tokens = 0;
            for (const auto& c : chunks) {
                ids.push_back(c.chunk_id);
                kept_tokens += c.token_count;
            }
            doc_records.push_back({{"doc_id", doc_id}, {"chunk_ids", std::move(ids)}, {"token_count", kept_tokens}});
            stats.chunks += static_cast<std::int64_t>(chunks.size());
            ++stats.documents;
            for (auto& c : chunks) all.push_back(std::move(c));
        },
        [&](std::size_t line, const std::string& why) {
            ++stats.malformed_records;
            log::warn("malformed_record", {{"file", docs.string()}, {"line", line}, {"reason", why}});
        });
    io::write_chunks(chunks_out, all);
    io::write_jsonl(documents_out, doc_records);
    return stats;
}

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(data);
}

std::string config_hash(const json& config) { return sha256_hex(config.dump()); }

ArtifactRef artifact(const fs::path& path) { return {path.generic_string(), sha256_file(path)}; }

namespace {

json refs_to_json(const std::map<std::string, ArtifactRef>& refs) {
    json j = json::object();
    for (const auto& [role, ref] : refs) j[role] = {{"path", ref.path}, {"sha256", ref.sha256}};
    return j;
}

std::map<std::string, ArtifactRef> refs_from_json(const json& j) {
    std::map<std::string, ArtifactRef> out;
    for (const auto& [role, ref] : j.items()) {
        out[role] = {ref.at("path").get<std::string>(), ref.at("sha256").get<std::string>()};
    }
    return out;
}

}  // namespace

json RunManifest::to_json() const {
    json st = json::array();
    for (const auto& s : stages) {
        st.push_back({{"name", s.name},
                      {"status", s.status},
                      {"config_hash", s.config_hash},
                      {"inputs", refs_to_json(s.inputs)},
                      {"outputs", refs_to_json(s.outputs)},
                      {"elapsed_ms", s.elapsed_ms},
                      {"extra", s.extra}});
    }
    json j = {{"command", command}, {"config_hash", config_hash}, {"seed", seed},
              {"status", status},   {"stages", std::move(st)},     {"ledger", ledger}};
    if (!error.empty()) j["error"] = error;
    return j;
}

RunManifest RunManifest::from_json(const json& j) {
    RunManifest m;
    m.command = j.value("command", std::string{});
    m.config_hash = j.value("config_hash", std::string{});
    m.seed = j.value("seed", std::uint64_t{0});
    m.status = j.value("status", std::string{});
    m.error = j.value("error", std::string{});
    m.ledger = j.value("ledger", json::object());
    for (const auto& s : j.value("stages", json::array())) {
        StageRecord r;
        r.name = s.at("name").get<std::string>();
        r.status = s.value("status", std::string{});
        r.config_hash = s.value("config_hash", std::string{});
        r.inputs = refs_from_json(s.value("inputs", json::object()));
        r.outputs = refs_from_json(s.value("outputs", json::object()));
        r.elapsed_ms = s.value("elapsed_ms", 0.0);
        r.extra = s.value("extra", json::object());
        m.stages.push_back(std::move(r));
    }
    return m;
}

void write_decisions(const fs::path& path, const FilterOutcome& outcome) {
    std::vector<json> recs;
    recs.reserve(outcome.chunk_scores.size());
    for (const auto& [chunk, score] : outcome.chunk_scores) {
        recs.push_back({{"chunk_id", chunk},
                        {"decision", outcome.keep_chunks.contains(chunk) ? "keep" : "discard"},
                        {"score", score},
                        {"node_id", outcome.chunk_node.at(chunk)}});
    }
    io::write_jsonl(path, recs);
}

json filter_summary(const FilterOutcome& outcome, std::int64_t corpus_size) {
    json cut = json::array();
    for (const auto& e : outcome.cut) {
        cut.push_back({{"node_id", e.node_id},
                       {"decision", to_string(e.decision)},
                       {"mean", e.estimate.mean},
                       {"n_samples", e.estimate.n_samples},
                       {"exhaustive", e.estimate.exhaustive}});
    }
    const double frac = corpus_size > 0 ? static_cast<double>(outcome.ledger.unique_chunks) /
                                              static_cast<double>(corpus_size)
                                        : 0.0;
    return {{"K", outcome.K},
            {"total_calls", outcome.ledger.total_calls},
            {"frac_evaluated", frac},
            {"node_evaluations", outcome.evaluation_order.size()},
            {"failures", outcome.ledger.failures},
            {"keep_chunks", outcome.keep_chunks.size()},
            {"discard_chunks", outcome.discard_chunks.size()},
            {"cut", std::move(cut)}};
}

std::map<std::string, double> read_decision_scores(const fs::path& path) {
    std::map<std::string, double> out;
    io::for_each_jsonl(path, [&](const json& r) {
        out[r.at("chunk_id").get<std::string>()] = r.at("score").get<double>();
    });
    return out;
}

namespace {

const std::vector<std::string> kAllStages = {"chunk", "cluster", "filter", "aggregate", "select"};

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_relative() ? base / path : path;
}

struct Plan {
    std::vector<std::string> stages;
    fs::path out_dir;
    std::uint64_t seed = 0;
    bool resume = true;
    ChunkingConfig chunking;
    fs::path docs;
    ClusteringConfig clustering;
    fs::path embeddings;
    std::optional<OracleConfig> oracle;
    FilterConfig filter;
    std::int64_t budget_tokens = 0;

    bool has(const std::string& s) const { return std::find(stages.begin(), stages.end(), s) != stages.end(); }
    fs::path file(const char* name) const { return out_dir / name; }
};

Plan parse_plan(const json& cfg, const fs::path& base) {
    Plan p;
    try {
        p.seed = cfg.value("seed", std::uint64_t{0});
        p.out_dir = resolve(base, cfg.value("out_dir", std::string("out")));
        p.resume = cfg.value("resume", true);
        p.stages = cfg.contains("stages") ? cfg["stages"].get<std::vector<std::string>>() : kAllStages;
        if (p.stages.empty()) throw ConfigError("no stages configured");
        for (const auto& s : p.stages) {
            if (std::find(kAllStages.begin(), kAllStages.end(), s) == kAllStages.end()) {
                throw ConfigError("unknown stage: " + s);
            }
        }
        // Keep canonical order regardless of how the list was written.
        std::vector<std::string> ordered;
        for (const auto& s : kAllStages) {
            if (p.has(s)) ordered.push_back(s);
        }
        p.stages = std::move(ordered);

        if (p.has("chunk")) {
            const auto& c = cfg.at("chunk");
            p.docs = resolve(base, c.at("docs").get<std::string>());
            p.chunking.token_limit = c.value("token_limit", p.chunking.token_limit);
            p.chunking.min_tokens = c.value("min_tokens", p.chunking.min_tokens);
            p.chunking.validate();
        }
        if (p.has("cluster")) {
            const auto& c = cfg.at("cluster");
            p.embeddings = resolve(base, c.at("embeddings").get<std::string>());
            p.clustering.max_rounds = c.value("rounds", p.clustering.max_rounds);
            if (c.contains("target_clusters") && !c["target_clusters"].is_null()) {
                p.clustering.target_cluster_count = c["target_clusters"].get<std::int64_t>();
            }
            const auto linkage = c.value("linkage", std::string("centroid"));
            if (linkage != "centroid" && linkage != "single") throw ConfigError("unknown linkage: " + linkage);
            p.clustering.linkage = linkage == "single" ? Linkage::single : Linkage::centroid;
            p.clustering.seed = p.seed;
            p.clustering.validate();
        }
        if (p.has("filter")) {
            p.oracle = OracleConfig::from_json(cfg.at("oracle"), base);
            json f = cfg.at("filter");
            if (!f.contains("seed")) f["seed"] = p.seed;
            p.filter = FilterConfig::from_json(f);
        }
        if (p.has("select")) {
            p.budget_tokens = cfg.at("select").at("budget_tokens").get<std::int64_t>();
            if (p.budget_tokens <= 0) throw ConfigError("budget_tokens must be positive");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    }
    return p;
}

class StageRunner {
   public:
    StageRunner(RunManifest& manifest, const std::optional<RunManifest>& previous, bool resume)
        : manifest_(manifest), previous_(previous), resume_(resume) {}

    /// Runs `body` unless an identical earlier run left matching outputs.
    template <class Body>
    void run(const std::string& name, const json& stage_cfg, const std::map<std::string, fs::path>& inputs,
             const std::map<std::string, fs::path>& outputs, Body&& body) {
        StageRecord rec;
        rec.name = name;
        rec.config_hash = config_hash(stage_cfg);
        for (const auto& [role, path] : inputs) {
            if (!fs::exists(path)) throw Error("stage " + name + ": missing input " + path.string());
            rec.inputs[role] = artifact(path);
        }
        if (const auto* prev = reusable(rec, outputs)) {
            rec.status = "reused";
            rec.outputs = prev->outputs;
            rec.extra = prev->extra;
            log::info("stage_reused", {{"stage", name}});
            manifest_.stages.push_back(std::move(rec));
            return;
        }
        const auto start = std::chrono::steady_clock::now();
        try {
            rec.extra = body();
        } catch (...) {
            rec.status = "failed";
            manifest_.stages.push_back(std::move(rec));
            throw;
        }
        rec.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        for (const auto& [role, path] : outputs) rec.outputs[role] = artifact(path);
        rec.status = "ran";
        log::info("stage_done", {{"stage", name}, {"elapsed_ms", rec.elapsed_ms}});
        manifest_.stages.push_back(std::move(rec));
    }

   private:
    const StageRecord* reusable(const StageRecord& rec, const std::map<std::string, fs::path>& outputs) const {
        if (!resume_ || !previous_) return nullptr;
        for (const auto& prev : previous_->stages) {
            if (prev.name != rec.name || prev.status == "failed") continue;
            if (prev.config_hash != rec.config_hash || prev.outputs.size() != outputs.size()) return nullptr;
            if (prev.inputs.size() != rec.inputs.size()) return nullptr;
            for (const auto& [role, ref] : rec.inputs) {
                auto it = prev.inputs.find(role);
                if (it == prev.inputs.end() || it->second.sha256 != ref.sha256) return nullptr;
            }
            for (const auto& [role, path] : outputs) {
                auto it = prev.outputs.find(role);
                if (it == prev.outputs.end() || !fs::exists(path) || sha256_file(path) != it->second.sha256) {
                    return nullptr;
                }
            }
            return &prev;
        }
        return nullptr;
    }

    RunManifest& manifest_;
    const std::optional<RunManifest>& previous_;
    bool resume_;
};

std::map<std::string, fs::path> oracle_inputs(const OracleConfig& oc) {
    switch (oc.kind) {
        case OracleKind::ground_truth: return {{"oracle_labels", oc.labels_path}};
        case OracleKind::lookup_file: return {{"oracle_lookup", oc.lookup_path}};
        case OracleKind::remote_http: return {{"oracle_chunks", oc.chunks_path}};
    }
    return {};
}

}  // namespace

RunManifest run_pipeline(const json& config, const fs::path& base_dir) {
    const Plan plan = parse_plan(config, base_dir);
    fs::create_directories(plan.out_dir);

    RunManifest manifest;
    manifest.command = "pipeline";
    manifest.config_hash = config_hash(config);
    manifest.seed = plan.seed;

    const fs::path manifest_path = plan.file("manifest.json");
    std::optional<RunManifest> previous;
    if (plan.resume && fs::exists(manifest_path)) {
        try {
            previous = RunManifest::from_json(io::read_json(manifest_path));
        } catch (const std::exception&) {
            previous.reset();
        }
    }
    StageRunner runner(manifest, previous, plan.resume);

    const auto chunks_file = plan.file("chunks.jsonl");
    const auto documents_file = plan.file("documents.jsonl");
    const auto tree_file = plan.file("tree.json");
    const auto decisions_file = plan.file("decisions.jsonl");
    const auto summary_file = plan.file("filter_summary.json");
    const auto doc_scores_file = plan.file("doc_scores.jsonl");
    const auto aggregate_file = plan.file("aggregate_summary.json");
    const auto selection_file = plan.file("selection.jsonl");

    try {
        if (plan.has("chunk")) {
            const json cfg = {{"token_limit", plan.chunking.token_limit}, {"min_tokens", plan.chunking.min_tokens}};
            runner.run("chunk", cfg, {{"docs", plan.docs}},
                       {{"chunks", chunks_file}, {"documents", documents_file}}, [&] {
                           const auto st = chunk_documents(plan.docs, chunks_file, documents_file, plan.chunking);
                           return json{{"documents", st.documents},
                                       {"chunks", st.chunks},
                                       {"dropped_chunks", st.dropped_chunks},
                                       {"malformed_records", st.malformed_records}};
                       });
        }
        if (plan.has("cluster")) {
            const json cfg = {{"rounds", plan.clustering.max_rounds},
                              {"target_clusters", plan.clustering.target_cluster_count
                                                      ? json(*plan.clustering.target_cluster_count)
                                                      : json(nullptr)},
                              {"linkage", plan.clustering.linkage == Linkage::single ? "single" : "centroid"},
                              {"seed", plan.seed}};
            std::map<std::string, fs::path> inputs{{"embeddings", plan.embeddings}};
            const bool restrict_to_chunks = fs::exists(chunks_file);
            if (restrict_to_chunks) inputs["chunks"] = chunks_file;
            runner.run("cluster", cfg, inputs, {{"tree", tree_file}}, [&] {
                auto vectors = io::read_embeddings(plan.embeddings);
                if (restrict_to_chunks) {
                    std::map<std::string, EmbeddingVector> by_id;
                    for (auto& v : vectors) by_id.emplace(v.chunk_id, std::move(v));
                    vectors.clear();
                    for (const auto& c : io::read_chunks(chunks_file)) {
                        auto it = by_id.find(c.chunk_id);
                        if (it == by_id.end()) throw Error("no embedding for chunk " + c.chunk_id);
                        vectors.push_back(std::move(it->second));
                    }
                }
                ClusteringTrace trace;
                const auto tree = build_tree(vectors, plan.clustering, &trace);
                io::write_tree(tree_file, tree);
                return json{{"leaves", tree.corpus_size()}, {"nodes", tree.size()}, {"depth", tree.max_depth()},
                            {"rounds", trace.rounds.size()}};
            });
        }
        if (plan.has("filter")) {
            auto inputs = oracle_inputs(*plan.oracle);
            inputs["tree"] = tree_file;
            json cfg = {{"filter", plan.filter.to_json()}, {"oracle", plan.oracle->to_json()}};
            // Data paths are covered by input digests.
            cfg["oracle"].erase("labels");
            cfg["oracle"].erase("lookup");
            cfg["oracle"].erase("chunks");
            cfg["oracle"].erase("prompt_template");
            if (!plan.oracle->prompt_template_path.empty()) inputs["prompt_template"] = plan.oracle->prompt_template_path;
            runner.run("filter", cfg, inputs, {{"decisions", decisions_file}, {"summary", summary_file}}, [&] {
                const auto tree = io::read_tree(tree_file);
                auto oracle = make_oracle(*plan.oracle);
                OracleSession session(*oracle, plan.oracle->max_concurrency);
                try {
                    const auto outcome = run_filter(tree, session, plan.filter);
                    write_decisions(decisions_file, outcome);
                    io::write_json(summary_file, filter_summary(outcome, tree.corpus_size()));
                    manifest.ledger = outcome.ledger.to_json();
                    return json{{"K", outcome.K}, {"ledger", manifest.ledger}};
                } catch (const FilterAborted& e) {
                    manifest.ledger = e.ledger.to_json();
                    throw;
                }
            });
            if (manifest.stages.back().status == "reused") {
                manifest.ledger = manifest.stages.back().extra.value("ledger", json::object());
            }
        }
        if (plan.has("aggregate")) {
            runner.run("aggregate", json::object(),
                       {{"decisions", decisions_file}, {"documents", documents_file}, {"chunks", chunks_file}},
                       {{"doc_scores", doc_scores_file}, {"summary", aggregate_file}}, [&] {
                           FilterOutcome scored;
                           scored.chunk_scores = read_decision_scores(decisions_file);
                           std::map<std::string, std::int64_t> chunk_tokens;
                           for (const auto& c : io::read_chunks(chunks_file)) chunk_tokens[c.chunk_id] = c.token_count;
                           const auto docs = io::read_documents(documents_file);
                           const auto agg = aggregate_documents(scored, docs);
                           std::vector<json> recs;
                           for (const auto& d : docs) {
                               auto it = agg.scores.find(d.doc_id);
                               if (it == agg.scores.end()) continue;
                               std::int64_t tokens = 0;
                               for (const auto& c : d.chunk_ids) {
                                   if (scored.chunk_scores.contains(c)) tokens += chunk_tokens.at(c);
                               }
                               recs.push_back({{"doc_id", d.doc_id}, {"score", it->second}, {"token_count", tokens}});
                           }
                           io::write_jsonl(doc_scores_file, recs);
                           io::write_json(aggregate_file, {{"scored", agg.scores.size()}, {"skipped", agg.skipped}});
                           return json{{"scored", agg.scores.size()}, {"skipped", agg.skipped.size()}};
                       });
        }
        if (plan.has("select")) {
            runner.run("select", {{"budget_tokens", plan.budget_tokens}}, {{"doc_scores", doc_scores_file}},
                       {{"selection", selection_file}}, [&] {
                           std::map<std::string, double> scores;
                           std::map<std::string, std::int64_t> tokens;
                           io::for_each_jsonl(doc_scores_file, [&](const json& r) {
                               const auto id = r.at("doc_id").get<std::string>();
                               scores[id] = r.at("score").get<double>();
                               tokens[id] = r.at("token_count").get<std::int64_t>();
                           });
                           const auto picked = select_top_k(scores, tokens, plan.budget_tokens);
                           std::vector<json> recs;
                           std::int64_t used = 0;
                           for (std::size_t i = 0; i < picked.size(); ++i) {
                               used += tokens.at(picked[i]);
                               recs.push_back({{"rank", i + 1},
                                               {"doc_id", picked[i]},
                                               {"score", scores.at(picked[i])},
                                               {"token_count", tokens.at(picked[i])}});
                           }
                           io::write_jsonl(selection_file, recs);
                           return json{{"selected", picked.size()}, {"tokens", used}};
                       });
        }
    } catch (const std::exception& e) {
        manifest.status = "failed";
        manifest.error = e.what();
        io::write_json(manifest_path, manifest.to_json());
        throw;
    }
    io::write_json(manifest_path, manifest.to_json());
    return manifest;
}

}  // namespace tbdf::pipeline
