// tbdf: command-line front end for chunking, clustering, tree filtering,
// selection, entropy probing, and planted-tree benchmarks.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "tbdf/clustering.hpp"
#include "tbdf/filter.hpp"
#include "tbdf/io.hpp"
#include "tbdf/log.hpp"
#include "tbdf/oracle.hpp"
#include "tbdf/pipeline.hpp"
#include "tbdf/synthbench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tbdf;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Globals {
    std::uint64_t seed = 0;
    std::string log_level = "warn";
    std::string manifest_out;
};

struct OracleFlags {
    std::string config;
    std::string kind;
    int levels = 0;
    std::string labels, lookup, endpoint, chunks, prompt_template;
    std::int64_t timeout_ms = -1;
    int max_retries = -1;
    int max_concurrency = 0;

    void attach(CLI::App* app) {
        app->add_option("--oracle", config, "Oracle config (JSON)");
        app->add_option("--oracle-kind", kind, "ground_truth | lookup_file | remote_http");
        app->add_option("--oracle-levels", levels, "Ordinal levels L");
        app->add_option("--oracle-labels", labels, "Ground-truth labels (JSONL {chunk_id, label})");
        app->add_option("--oracle-lookup", lookup, "Lookup scores (JSONL {chunk_id, level})");
        app->add_option("--oracle-endpoint", endpoint, "Remote scorer URL");
        app->add_option("--oracle-chunks", chunks, "Chunks file with text for the remote scorer");
        app->add_option("--prompt-template", prompt_template, "Prompt template prepended to chunk text");
        app->add_option("--request-timeout-ms", timeout_ms);
        app->add_option("--max-retries", max_retries);
        app->add_option("--max-concurrency", max_concurrency);
    }

    OracleConfig resolve() const {
        json j = json::object();
        fs::path base;
        if (!config.empty()) {
            j = io::read_json(config);
            base = fs::path(config).parent_path();
        }
        if (!kind.empty()) j["kind"] = kind;
        if (levels > 0) j["levels"] = levels;
        if (!labels.empty()) j["labels"] = fs::absolute(labels).string();
        if (!lookup.empty()) j["lookup"] = fs::absolute(lookup).string();
        if (!endpoint.empty()) j["endpoint"] = endpoint;
        if (!chunks.empty()) j["chunks"] = fs::absolute(chunks).string();
        if (!prompt_template.empty()) j["prompt_template"] = fs::absolute(prompt_template).string();
        if (timeout_ms >= 0) j["request_timeout_ms"] = timeout_ms;
        if (max_retries >= 0) j["max_retries"] = max_retries;
        if (max_concurrency > 0) j["max_concurrency"] = max_concurrency;
        if (!j.contains("kind")) throw ConfigError("an oracle is required (--oracle or --oracle-kind)");
        return OracleConfig::from_json(j, base);
    }
};

class ManifestScope {
   public:
    ManifestScope(std::string command, const Globals& g) : g_(g) {
        m_.command = std::move(command);
        m_.seed = g.seed;
        stage_.name = m_.command;
        start_ = std::chrono::steady_clock::now();
    }

    void config(const json& cfg) {
        m_.config_hash = pipeline::config_hash(cfg);
        stage_.config_hash = m_.config_hash;
    }
    void input(const std::string& role, const fs::path& p) { stage_.inputs[role] = pipeline::artifact(p); }
    void output(const std::string& role, const fs::path& p) {
        stage_.outputs[role] = pipeline::artifact(p);
        if (default_path_.empty()) default_path_ = p.string() + ".manifest.json";
    }
    void extra(const json& e) { stage_.extra = e; }
    void ledger(const json& l) { m_.ledger = l; }

    void finish(const std::string& status, const std::string& error = {}) {
        stage_.status = status == "ok" ? "ran" : "failed";
        stage_.elapsed_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
        m_.status = status;
        m_.error = error;
        m_.stages = {stage_};
        const std::string target = !g_.manifest_out.empty() ? g_.manifest_out : default_path_;
        if (!target.empty()) {
            io::write_json(target, m_.to_json());
        } else {
            json line = m_.to_json();
            line["event"] = "manifest";
            std::cerr << line.dump() << '\n';
        }
    }

   private:
    const Globals& g_;
    pipeline::RunManifest m_;
    pipeline::StageRecord stage_;
    std::string default_path_;
    std::chrono::steady_clock::time_point start_;
};

std::vector<json> as_list(const json& j) {
    if (j.is_array()) return j.get<std::vector<json>>();
    return {j};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tree-based data filtering with adaptive oracle sampling"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--log-level", g.log_level, "debug | info | warn | error | off")->capture_default_str();
    app.add_option("--manifest-out", g.manifest_out, "Where to write the run manifest");

    // chunk
    auto* chunk = app.add_subcommand("chunk", "Split documents into token-limited chunks");
    std::string docs_path, chunks_out, documents_out;
    pipeline::ChunkingConfig chunk_cfg;
    chunk->add_option("--docs", docs_path, "Documents (JSONL {doc_id, text})")->required();
    chunk->add_option("--out", chunks_out, "Chunks output (JSONL)")->required();
    chunk->add_option("--documents-out", documents_out, "Documents index output (JSONL)");
    chunk->add_option("--token-limit", chunk_cfg.token_limit)->capture_default_str();
    chunk->add_option("--min-tokens", chunk_cfg.min_tokens)->capture_default_str();

    // cluster
    auto* cluster = app.add_subcommand("cluster", "Build a hierarchical clustering from embeddings");
    std::string embeddings_path, tree_out, linkage = "centroid";
    ClusteringConfig cluster_cfg;
    std::int64_t target_clusters = 0;
    cluster->add_option("--embeddings", embeddings_path, "Embeddings (JSONL {chunk_id, values})")->required();
    cluster->add_option("--out-tree", tree_out, "Tree output (JSON)")->required();
    cluster->add_option("--rounds", cluster_cfg.max_rounds)->capture_default_str();
    cluster->add_option("--target-clusters", target_clusters);
    cluster->add_option("--linkage", linkage)->check(CLI::IsMember({"centroid", "single"}))->capture_default_str();
    cluster->add_option("--threads", cluster_cfg.threads);

    // filter
    auto* filter = app.add_subcommand("filter", "Classify tree nodes keep/discard by adaptive sampling");
    std::string tree_path, decisions_out, summary_out, mode = "point", leaf_policy = "midpoint";
    std::string filter_chunks, doc_scores_out;
    FilterConfig filter_cfg;
    OracleFlags filter_oracle;
    filter->add_option("--tree", tree_path)->required();
    filter_oracle.attach(filter);
    filter->add_option("--alpha", filter_cfg.alpha)->capture_default_str();
    filter->add_option("--beta", filter_cfg.beta)->capture_default_str();
    filter->add_option("--nmax", filter_cfg.n_max)->capture_default_str();
    filter->add_option("--delta", filter_cfg.delta)->capture_default_str();
    filter->add_option("--mode", mode)->check(CLI::IsMember({"point", "hoeffding", "credible"}))->capture_default_str();
    filter->add_option("--leaf-policy", leaf_policy)->check(CLI::IsMember({"midpoint", "discard"}));
    filter->add_option("--credible-mass", filter_cfg.interval.credible_mass)->capture_default_str();
    filter->add_option("--posterior-samples", filter_cfg.interval.posterior_samples)->capture_default_str();
    filter->add_option("--out", decisions_out, "Decisions output (JSONL)")->required();
    filter->add_option("--summary", summary_out, "Summary output (JSON); stdout when omitted");
    filter->add_option("--chunks", filter_chunks, "Chunks file, enables document scores");
    filter->add_option("--doc-scores-out", doc_scores_out, "Document scores output (JSONL)");

    // select
    auto* select = app.add_subcommand("select", "Token-budgeted top-k document selection");
    std::string scores_path, selection_out;
    std::int64_t budget = 0;
    select->add_option("--scores", scores_path, "Document scores (JSONL {doc_id, score, token_count})")->required();
    select->add_option("--budget-tokens", budget)->required();
    select->add_option("--out", selection_out, "Selection output (JSONL); stdout when omitted");

    // probe-entropy
    auto* probe = app.add_subcommand("probe-entropy", "Per-level entropy of oracle feedback");
    std::string probe_tree, probe_out;
    std::int64_t probe_clusters = 100, probe_samples = 100;
    OracleFlags probe_oracle;
    probe->add_option("--tree", probe_tree)->required();
    probe_oracle.attach(probe);
    probe->add_option("--clusters", probe_clusters)->capture_default_str();
    probe->add_option("--samples", probe_samples)->capture_default_str();
    probe->add_option("--out", probe_out, "Output (JSONL); stdout when omitted");

    // bench
    auto* bench = app.add_subcommand("bench", "Monte Carlo checks on planted trees");
    std::string spec_path, cfg_path, report_out;
    std::int64_t trials = 100;
    unsigned bench_threads = 0;
    bench->add_option("--spec", spec_path, "Planted spec (JSON object or array)")->required();
    bench->add_option("--cfg", cfg_path, "Filter config (JSON object or array)")->required();
    bench->add_option("--trials", trials)->capture_default_str();
    bench->add_option("--out", report_out, "CSV report")->required();
    bench->add_option("--threads", bench_threads);

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "Run chunk/cluster/filter/aggregate/select stages from a config");
    std::string pipeline_cfg;
    pipe->add_option("--config", pipeline_cfg)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    std::optional<ManifestScope> scope;
    try {
        log::set_level(log::parse_level(g.log_level));

        if (*chunk) {
            scope.emplace("chunk", g);
            chunk_cfg.validate();
            if (documents_out.empty()) documents_out = fs::path(chunks_out).replace_extension().string() + ".documents.jsonl";
            scope->config({{"token_limit", chunk_cfg.token_limit}, {"min_tokens", chunk_cfg.min_tokens}});
            scope->input("docs", docs_path);
            const auto st = pipeline::chunk_documents(docs_path, chunks_out, documents_out, chunk_cfg);
            scope->output("chunks", chunks_out);
            scope->output("documents", documents_out);
            scope->extra({{"documents", st.documents},
                          {"chunks", st.chunks},
                          {"dropped_chunks", st.dropped_chunks},
                          {"malformed_records", st.malformed_records}});
        } else if (*cluster) {
            scope.emplace("cluster", g);
            cluster_cfg.linkage = linkage == "single" ? Linkage::single : Linkage::centroid;
            if (target_clusters > 0) cluster_cfg.target_cluster_count = target_clusters;
            cluster_cfg.seed = g.seed;
            cluster_cfg.validate();
            scope->config({{"rounds", cluster_cfg.max_rounds},
                           {"target_clusters", target_clusters},
                           {"linkage", linkage},
                           {"seed", g.seed}});
            scope->input("embeddings", embeddings_path);
            const auto vectors = io::read_embeddings(embeddings_path);
            ClusteringTrace trace;
            const auto tree = build_tree(vectors, cluster_cfg, &trace);
            io::write_tree(tree_out, tree);
            scope->output("tree", tree_out);
            scope->extra({{"leaves", tree.corpus_size()}, {"depth", tree.max_depth()}, {"rounds", trace.rounds.size()}});
        } else if (*filter) {
            scope.emplace("filter", g);
            filter_cfg.mode = parse_mode(mode);
            filter_cfg.leaf_policy = parse_leaf_policy(leaf_policy);
            filter_cfg.seed = g.seed;
            filter_cfg.interval.delta = filter_cfg.delta;
            filter_cfg.validate();
            const auto ocfg = filter_oracle.resolve();
            scope->config({{"filter", filter_cfg.to_json()}, {"oracle", ocfg.to_json()}});
            scope->input("tree", tree_path);
            const auto tree = io::read_tree(tree_path);
            auto oracle = make_oracle(ocfg);
            OracleSession session(*oracle, ocfg.max_concurrency);
            FilterOutcome outcome;
            try {
                outcome = run_filter(tree, session, filter_cfg);
            } catch (const FilterAborted& e) {
                scope->ledger(e.ledger.to_json());
                throw;
            }
            scope->ledger(outcome.ledger.to_json());
            pipeline::write_decisions(decisions_out, outcome);
            scope->output("decisions", decisions_out);
            const auto summary = pipeline::filter_summary(outcome, tree.corpus_size());
            if (summary_out.empty()) {
                std::cout << summary.dump(2) << '\n';
            } else {
                io::write_json(summary_out, summary);
                scope->output("summary", summary_out);
            }
            if (!filter_chunks.empty() && !doc_scores_out.empty()) {
                std::map<std::string, Document> docs;
                std::map<std::string, std::int64_t> chunk_tokens;
                for (const auto& c : io::read_chunks(filter_chunks)) {
                    auto& d = docs[c.doc_id];
                    d.doc_id = c.doc_id;
                    d.chunk_ids.push_back(c.chunk_id);
                    chunk_tokens[c.chunk_id] = c.token_count;
                }
                std::vector<Document> doc_list;
                for (auto& [_, d] : docs) doc_list.push_back(std::move(d));
                const auto agg = aggregate_documents(outcome, doc_list);
                std::vector<json> recs;
                for (const auto& d : doc_list) {
                    auto it = agg.scores.find(d.doc_id);
                    if (it == agg.scores.end()) continue;
                    std::int64_t tokens = 0;
                    for (const auto& c : d.chunk_ids) {
                        if (outcome.chunk_scores.contains(c)) tokens += chunk_tokens.at(c);
                    }
                    recs.push_back({{"doc_id", d.doc_id}, {"score", it->second}, {"token_count", tokens}});
                }
                io::write_jsonl(doc_scores_out, recs);
                scope->output("doc_scores", doc_scores_out);
                if (!agg.skipped.empty()) log::warn("documents_skipped", {{"doc_ids", agg.skipped}});
            }
            scope->extra({{"K", outcome.K}});
        } else if (*select) {
            scope.emplace("select", g);
            scope->config({{"budget_tokens", budget}});
            scope->input("scores", scores_path);
            std::map<std::string, double> scores;
            std::map<std::string, std::int64_t> tokens;
            io::for_each_jsonl(scores_path, [&](const json& r) {
                const auto id = r.at("doc_id").get<std::string>();
                scores[id] = r.at("score").get<double>();
                tokens[id] = r.at("token_count").get<std::int64_t>();
            });
            const auto picked = select_top_k(scores, tokens, budget);
            std::vector<json> recs;
            for (std::size_t i = 0; i < picked.size(); ++i) {
                recs.push_back({{"rank", i + 1},
                                {"doc_id", picked[i]},
                                {"score", scores.at(picked[i])},
                                {"token_count", tokens.at(picked[i])}});
            }
            if (selection_out.empty()) {
                for (const auto& r : recs) std::cout << r.dump() << '\n';
            } else {
                io::write_jsonl(selection_out, recs);
                scope->output("selection", selection_out);
            }
            scope->extra({{"selected", picked.size()}});
        } else if (*probe) {
            scope.emplace("probe-entropy", g);
            const auto ocfg = probe_oracle.resolve();
            scope->config({{"clusters", probe_clusters}, {"samples", probe_samples}, {"oracle", ocfg.to_json()},
                           {"seed", g.seed}});
            scope->input("tree", probe_tree);
            const auto tree = io::read_tree(probe_tree);
            auto oracle = make_oracle(ocfg);
            OracleSession session(*oracle, ocfg.max_concurrency);
            const auto levels = entropy_probe(tree, session, probe_clusters, probe_samples, g.seed);
            std::vector<json> recs;
            for (const auto& le : levels) {
                recs.push_back({{"depth", le.depth},
                                {"mean_entropy", le.mean()},
                                {"node_ids", le.nodes},
                                {"entropies", le.entropies},
                                {"sample_sizes", le.sample_sizes}});
            }
            if (probe_out.empty()) {
                for (const auto& r : recs) std::cout << r.dump() << '\n';
            } else {
                io::write_jsonl(probe_out, recs);
                scope->output("entropy", probe_out);
            }
            scope->ledger(session.ledger().to_json());
        } else if (*bench) {
            scope.emplace("bench", g);
            const json spec_j = io::read_json(spec_path);
            const json cfg_j = io::read_json(cfg_path);
            std::vector<synth::PlantedSpec> specs;
            std::vector<FilterConfig> cfgs;
            for (const auto& s : as_list(spec_j)) specs.push_back(synth::PlantedSpec::from_json(s));
            for (const auto& c : as_list(cfg_j)) cfgs.push_back(FilterConfig::from_json(c));
            scope->config({{"spec", spec_j}, {"cfg", cfg_j}, {"trials", trials}, {"seed", g.seed}});
            scope->input("spec", spec_path);
            scope->input("cfg", cfg_path);
            const auto rows = synth::sweep(specs, cfgs, trials, g.seed, bench_threads);
            {
                if (fs::path(report_out).has_parent_path()) fs::create_directories(fs::path(report_out).parent_path());
                std::ofstream out(report_out, std::ios::binary | std::ios::trunc);
                if (!out) throw Error("cannot write " + report_out);
                synth::write_csv(out, rows);
            }
            scope->output("report", report_out);
        } else if (*pipe) {
            scope.emplace("pipeline", g);
            json cfg = io::read_json(pipeline_cfg);
            if (!cfg.contains("seed") && g.seed != 0) cfg["seed"] = g.seed;
            scope->config(cfg);
            scope->input("config", pipeline_cfg);
            const auto base = fs::absolute(pipeline_cfg).parent_path();
            const auto m = pipeline::run_pipeline(cfg, base);
            scope->ledger(m.ledger);
            scope->extra(m.to_json());
            if (g.manifest_out.empty()) {
                // run_pipeline already wrote out_dir/manifest.json
                return 0;
            }
        }
        scope->finish("ok");
        return 0;
    } catch (const ConfigError& e) {
        log::error("config_error", {{"message", e.what()}});
        if (scope) scope->finish("config_error", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        log::error("stage_failure", {{"message", e.what()}});
        if (scope) scope->finish("failed", e.what());
        return kExitStage;
    }
}
