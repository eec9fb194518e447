#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tbdf/core.hpp"

namespace tbdf {

/// Raised for a chunk id the oracle has no data for.
class UnknownChunk : public Error {
   public:
    explicit UnknownChunk(const std::string& chunk_id) : Error("chunk not found: " + chunk_id) {}
};

enum class OracleKind { ground_truth, lookup_file, remote_http };

struct OracleConfig {
    OracleKind kind = OracleKind::ground_truth;
    int levels = 6;

    /// ground_truth: JSONL {chunk_id, label} with label in [0,1].
    std::filesystem::path labels_path;
    /// lookup_file: JSONL {chunk_id, level}.
    std::filesystem::path lookup_path;

    /// remote_http only.
    std::string endpoint;
    std::filesystem::path prompt_template_path;
    /// Chunk texts for the remote scorer (chunks file format).
    std::filesystem::path chunks_path;
    std::chrono::milliseconds request_timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{1000};
    int max_concurrency = 4;
    std::string token_env = "TBDF_ORACLE_TOKEN";

    void validate() const;
    static OracleConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const;
};

/// The expensive per-chunk quality evaluator.
class QualityOracle {
   public:
    virtual ~QualityOracle() = default;
    virtual int levels() const = 0;
    /// Throws UnknownChunk; remote oracles report exhausted retries as a
    /// failure score instead of throwing.
    virtual OrdinalScore score(const std::string& chunk_id) = 0;
    virtual bool remote() const { return false; }
};

/// Planted labels in [0,1]. With two levels and binary labels the level
/// equals the label.
class GroundTruthOracle final : public QualityOracle {
   public:
    GroundTruthOracle(std::unordered_map<std::string, double> labels, int levels);
    int levels() const override { return levels_; }
    OrdinalScore score(const std::string& chunk_id) override;

   private:
    std::unordered_map<std::string, double> labels_;
    int levels_;
};

class LookupOracle final : public QualityOracle {
   public:
    LookupOracle(std::unordered_map<std::string, int> table, int levels);
    int levels() const override { return levels_; }
    OrdinalScore score(const std::string& chunk_id) override;

   private:
    std::unordered_map<std::string, int> table_;
    int levels_;
};

/// POSTs {"text": prompt + chunk text} and reads an integer "quality_score"
/// from the JSON response, retrying with exponential backoff.
class RemoteHttpOracle final : public QualityOracle {
   public:
    RemoteHttpOracle(OracleConfig cfg, std::unordered_map<std::string, std::string> texts, std::string prompt);
    int levels() const override { return cfg_.levels; }
    OrdinalScore score(const std::string& chunk_id) override;
    bool remote() const override { return true; }

   private:
    std::optional<int> attempt(const std::string& body) const;

    OracleConfig cfg_;
    std::unordered_map<std::string, std::string> texts_;
    std::string prompt_;
    std::string host_;
    std::string path_;
    std::string token_;
};

/// Searches a response for an object carrying an integer "quality_score",
/// descending into nested values and JSON embedded in strings.
std::optional<std::int64_t> extract_quality_score(const std::string& body);

std::unique_ptr<QualityOracle> make_oracle(const OracleConfig& cfg);

struct QueryLedger {
    std::int64_t total_calls = 0;
    std::int64_t unique_chunks = 0;
    std::map<NodeId, std::int64_t> per_node_calls;
    std::int64_t failures = 0;

    nlohmann::json to_json() const;
};

struct BatchItem {
    OrdinalScore score;
    /// Set when the item could not be scored at all (e.g. unknown chunk);
    /// `score` is then the failure sentinel.
    std::optional<std::string> error;
};

/// Memoizing front end to an oracle. Each chunk is dispatched at most once
/// across all nodes and callers; only first-time evaluations are charged.
class OracleSession {
   public:
    explicit OracleSession(QualityOracle& oracle, int max_concurrency = 1);

    int levels() const { return oracle_.levels(); }
    OrdinalScore evaluate(const std::string& chunk_id, NodeId charge_to = kNoParent);
    std::vector<BatchItem> evaluate_batch(const std::vector<std::string>& chunk_ids, NodeId node_id);
    QueryLedger ledger() const;

   private:
    QualityOracle& oracle_;
    int max_concurrency_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::shared_future<OrdinalScore>> cache_;
    QueryLedger ledger_;
};

}  // namespace tbdf
