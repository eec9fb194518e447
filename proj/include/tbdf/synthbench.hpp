#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tbdf/core.hpp"
#include "tbdf/filter.hpp"

namespace tbdf::synth {

enum class LabelKind { binary, unit_interval };

/// Parameters of a planted tree: a balanced tree with a hidden cut of
/// k_prime nearly pure subtrees.
struct PlantedSpec {
    int branching = 2;
    int depth = 12;
    std::int64_t k_prime = 8;
    double alpha_prime = 0.0;
    double beta_prime = 0.0;
    double good_fraction = 0.5;
    LabelKind label_kind = LabelKind::binary;
    std::uint64_t seed = 0;

    void validate() const;
    int levels() const { return label_kind == LabelKind::binary ? 2 : 6; }
    nlohmann::json to_json() const;
    static PlantedSpec from_json(const nlohmann::json& j);
};

struct PlantedTree {
    ClusterTree tree;
    std::unordered_map<std::string, double> labels;
    /// The hidden cut, ascending node id, with its good/bad flags.
    std::vector<NodeId> cut;
    std::vector<bool> good;
};

/// Builds the tree in heap order (children of i are b*i+1 .. b*i+b), so
/// ids are already canonical. The cut grows from the root by expanding a
/// uniformly chosen expandable cut node until k_prime nodes exist.
///
/// Good leaves are Bernoulli(1 - beta') for binary labels; for unit-interval
/// labels they are 1 - beta' * U with U ~ Uniform[0, 2] clipped to [0, 1],
/// which has mean 1 - beta' whenever beta' <= 1/2. Bad leaves mirror this
/// around 0 with alpha'.
PlantedTree plant_tree(const PlantedSpec& spec);

struct RunReport {
    std::int64_t realized_K = 0;
    std::int64_t total_calls = 0;
    std::int64_t node_evaluations = 0;
    std::optional<double> keep_mean;
    std::optional<double> discard_mean;
    double bound_width = 0.0;
    bool prop1_ok = false;
    /// Whether the thresholds meet the margin conditions that make the
    /// K <= K' guarantee apply; prop2_ok is vacuously true otherwise.
    bool prop2_applicable = false;
    bool prop2_ok = false;
    bool complexity_ok = false;
    bool evaluations_ok = false;
    std::uint64_t seed = 0;
};

/// Margin conditions alpha >= alpha' + w and beta >= beta' + w with
/// w = final_bound_width(K', delta, n_max).
bool prop2_margins_hold(const PlantedSpec& spec, const FilterConfig& cfg);

RunReport run_trial(const PlantedSpec& spec, const FilterConfig& cfg);

/// P(X <= k) for X ~ Binomial(n, p).
double binomial_cdf(std::int64_t k, std::int64_t n, double p);

/// One-sided test of H0: rate >= `rate`; passes unless the observed count is
/// significantly low at level `significance`.
bool rate_test_passes(std::int64_t successes, std::int64_t trials, double rate, double significance = 0.01);

struct SweepRow {
    std::size_t spec_index = 0;
    std::size_t cfg_index = 0;
    PlantedSpec spec;
    FilterConfig cfg;
    std::int64_t trials = 0;
    std::int64_t prop1_passes = 0;
    std::int64_t prop2_passes = 0;
    std::int64_t complexity_passes = 0;
    double mean_K = 0.0;
    double mean_calls = 0.0;
    double mean_keep = 0.0;
    double mean_discard = 0.0;
    /// mean over trials of max(0, discard_mean - alpha)
    double mean_discard_excess = 0.0;
    bool prop1_rate_ok = false;
    bool prop2_rate_ok = false;
};

/// Runs `trials` trials per (spec, cfg) cell. Trial seeds derive from
/// (base_seed, cell, trial); the input seeds are overwritten.
std::vector<SweepRow> sweep(const std::vector<PlantedSpec>& specs, const std::vector<FilterConfig>& cfgs,
                            std::int64_t trials, std::uint64_t base_seed, unsigned threads = 0);

void write_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace tbdf::synth
