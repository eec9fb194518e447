#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tbdf/core.hpp"
#include "tbdf/estimator.hpp"
#include "tbdf/oracle.hpp"

namespace tbdf {

enum class DecisionMode { point, hoeffding, credible };
enum class LeafPolicy { midpoint, discard };
enum class Decision { keep, discard, split };

const char* to_string(DecisionMode m);
const char* to_string(LeafPolicy p);
const char* to_string(Decision d);
DecisionMode parse_mode(const std::string& s);
LeafPolicy parse_leaf_policy(const std::string& s);

struct FilterConfig {
    double alpha = 0.2;
    double beta = 0.4;
    std::int64_t n_max = 100;
    double delta = 0.05;
    DecisionMode mode = DecisionMode::point;
    /// Used by the credible mode; its own `delta` and `seed` are ignored in
    /// favour of the fields here and per-node derived seeds.
    IntervalConfig interval;
    LeafPolicy leaf_policy = LeafPolicy::midpoint;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static FilterConfig from_json(const nlohmann::json& j);
};

struct LeafSample {
    std::vector<std::string> chunk_ids;
    bool exhaustive = false;
};

/// All leaves when leaf_count <= n_max, else n_max distinct leaves chosen
/// uniformly without replacement from a stream seeded by (seed, node).
/// Returned ids follow the tree's depth-first leaf order.
LeafSample sample_leaves(const ClusterTree& tree, NodeId node, std::int64_t n_max, std::uint64_t seed);

/// Keep / discard / split for one evaluated node. `eval_index` is the
/// 1-based position of this evaluation in the run (drives the delta schedule).
Decision decide(const NodeEstimate& est, const FilterConfig& cfg, std::int64_t eval_index);

struct CutEntry {
    NodeId node_id = 0;
    Decision decision = Decision::keep;
    NodeEstimate estimate;
};

struct FilterOutcome {
    std::set<std::string> keep_chunks;
    std::set<std::string> discard_chunks;
    /// Classified nodes in the order they were decided.
    std::vector<CutEntry> cut;
    std::map<std::string, double> chunk_scores;
    std::map<std::string, NodeId> chunk_node;
    std::int64_t K = 0;
    QueryLedger ledger;
    std::vector<NodeId> evaluation_order;

    Cut as_cut() const;
};

/// Oracle hard failure during a run; carries the ledger at abort time.
class FilterAborted : public Error {
   public:
    FilterAborted(const std::string& what, QueryLedger partial) : Error(what), ledger(std::move(partial)) {}
    QueryLedger ledger;
};

/// Greedy top-down filtering over `tree` (must be pruned). Active nodes are
/// a FIFO queue seeded with the root; split children enter in ascending id.
FilterOutcome run_filter(const ClusterTree& tree, OracleSession& oracle, const FilterConfig& cfg);

struct DocumentScores {
    std::map<std::string, double> scores;
    /// Documents none of whose chunks were classified.
    std::vector<std::string> skipped;
};

/// Unweighted mean of each document's chunk scores.
DocumentScores aggregate_documents(const FilterOutcome& outcome, const std::vector<Document>& documents);

/// Highest scores first (ties to the lower doc id); takes the longest
/// prefix whose total token count fits the budget.
std::vector<std::string> select_top_k(const std::map<std::string, double>& doc_scores,
                                      const std::map<std::string, std::int64_t>& token_counts,
                                      std::int64_t token_budget);

struct LevelEntropy {
    std::int64_t depth = 0;
    std::vector<NodeId> nodes;
    std::vector<double> entropies;
    std::vector<std::int64_t> sample_sizes;

    double mean() const;
};

/// Feedback-entropy diagnostic: per depth, sample up to `per_level_clusters`
/// nodes and up to `per_cluster_samples` leaves from each.
std::vector<LevelEntropy> entropy_probe(const ClusterTree& tree, OracleSession& oracle,
                                        std::int64_t per_level_clusters, std::int64_t per_cluster_samples,
                                        std::uint64_t seed);

}  // namespace tbdf
