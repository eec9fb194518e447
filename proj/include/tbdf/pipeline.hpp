#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tbdf/core.hpp"
#include "tbdf/filter.hpp"

namespace tbdf::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

/// Splits text into tokens. The default splits on ASCII whitespace.
using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;
std::vector<std::string> whitespace_tokens(std::string_view text);

struct ChunkingConfig {
    std::int64_t token_limit = 2048;
    std::int64_t min_tokens = 50;

    void validate() const;
};

/// Consecutive slices of at most token_limit tokens; slices shorter than
/// min_tokens are dropped. Chunk ids are "<doc_id>#<ordinal>" and chunk text
/// is the slice's tokens joined by single spaces.
std::vector<Chunk> chunk_document(const std::string& doc_id, std::string_view text, const ChunkingConfig& cfg,
                                  const Tokenizer& tokenize = whitespace_tokens);

struct ChunkingStats {
    std::int64_t documents = 0;
    std::int64_t chunks = 0;
    std::int64_t dropped_chunks = 0;
    std::int64_t malformed_records = 0;
};

/// Reads a docs file (JSONL {doc_id, text}) and writes the chunks file and a
/// documents file (JSONL {doc_id, chunk_ids, token_count}). Malformed records
/// are skipped with a warning.
ChunkingStats chunk_documents(const fs::path& docs, const fs::path& chunks_out, const fs::path& documents_out,
                              const ChunkingConfig& cfg, const Tokenizer& tokenize = whitespace_tokens);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const fs::path& path);
/// Digest of the compact dump of `config`; object keys are sorted, so the
/// value is independent of construction order and platform.
std::string config_hash(const json& config);

struct ArtifactRef {
    std::string path;
    std::string sha256;
};

struct StageRecord {
    std::string name;
    std::string status;  // "ran" | "reused" | "failed"
    std::string config_hash;
    std::map<std::string, ArtifactRef> inputs;
    std::map<std::string, ArtifactRef> outputs;
    double elapsed_ms = 0.0;
    json extra = json::object();
};

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string status = "ok";
    std::string error;
    std::vector<StageRecord> stages;
    json ledger = json::object();

    json to_json() const;
    static RunManifest from_json(const json& j);
};

ArtifactRef artifact(const fs::path& path);

/// decisions.jsonl records {chunk_id, decision, score, node_id} sorted by
/// chunk id, plus a summary {K, total_calls, frac_evaluated, ...}.
void write_decisions(const fs::path& path, const FilterOutcome& outcome);
json filter_summary(const FilterOutcome& outcome, std::int64_t corpus_size);
/// chunk id -> score from a decisions file.
std::map<std::string, double> read_decision_scores(const fs::path& path);

/// Executes the configured stages in order (chunk, cluster, filter,
/// aggregate, select). Relative paths resolve against `base_dir`. Throws
/// ConfigError before doing any work if the configuration is invalid; a
/// stage failure is recorded in the manifest (written to out_dir) and
/// rethrown.
RunManifest run_pipeline(const json& config, const fs::path& base_dir);

}  // namespace tbdf::pipeline
