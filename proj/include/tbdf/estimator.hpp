#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tbdf/core.hpp"

namespace tbdf {

/// Sampled quality statistics at one tree node.
struct NodeEstimate {
    NodeId node_id = 0;
    std::int64_t n_samples = 0;
    /// One count per ordinal level 0..L-1; failures are tracked separately.
    std::vector<std::int64_t> level_counts;
    std::int64_t failures = 0;
    /// Empirical mean of normalized scores, failures contributing 0.
    double mean = 0.0;
    /// All leaves under the node were evaluated, so `mean` is exact.
    bool exhaustive = false;

    int levels() const { return static_cast<int>(level_counts.size()); }
};

NodeEstimate make_estimate(NodeId node_id, std::span<const OrdinalScore> scores, int levels, bool exhaustive);

struct IntervalConfig {
    double delta = 0.05;
    double credible_mass = 0.95;
    int posterior_samples = 100;
    /// Dirichlet prior; empty means all ones at the estimate's L.
    std::vector<double> prior;
    std::uint64_t seed = 0;

    void validate() const;
};

/// sqrt(log(2/delta_prime) / (2n)).
double hoeffding_halfwidth(std::int64_t n, double delta_prime);

/// 6 delta / (i^2 pi^2); sums to delta over i >= 1.
double delta_schedule(std::int64_t i, double delta);

/// sqrt(log(1.3 K / delta) / n_max), the purity slack after K cut nodes.
double final_bound_width(std::int64_t k, double delta, std::int64_t n_max);

/// Equal-tailed interval of the normalized mean under the
/// Dirichlet(prior + counts) posterior, from `posterior_samples` draws.
/// Failures count as level-0 observations.
std::pair<double, double> credible_interval(const NodeEstimate& est, const IntervalConfig& cfg);

/// Shannon entropy (bits) of the empirical distribution of `level_counts`.
double feedback_entropy(std::span<const std::int64_t> level_counts);

/// Stateless 64-bit mixer used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace tbdf
