#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tbdf/core.hpp"

namespace tbdf {

enum class Linkage { single, centroid };

/// Point metric. `euclidean` exists so geometric fixtures (points on a line)
/// can drive the merge logic; production runs use cosine.
enum class Metric { cosine, euclidean };

struct ClusteringConfig {
    int max_rounds = 5;
    std::optional<std::int64_t> target_cluster_count;
    Linkage linkage = Linkage::centroid;
    Metric metric = Metric::cosine;
    /// Recorded for provenance. Nearest-neighbour search is exact and ties
    /// break on cluster index, so the build consumes no randomness.
    std::uint64_t seed = 0;
    /// Worker threads for nominations; 0 picks hardware concurrency.
    unsigned threads = 0;

    void validate() const;
};

/// 1 - cos(a, b). Throws "degenerate embedding" on a zero vector.
double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine_distance(std::span<const double> a, std::span<const double> b);

struct ClusterState {
    /// Indices into the point set, ascending.
    std::vector<std::size_t> members;
    /// Sum of member points; the centroid is derived from it per metric.
    std::vector<double> sum;

    std::size_t size() const { return members.size(); }
};

struct MergeRecord {
    /// nominations[i] is the cluster that cluster i chose as nearest.
    std::vector<std::size_t> nominations;
    /// Connected components of the nomination graph, as ascending lists of
    /// input cluster indices, ordered by their smallest member.
    std::vector<std::vector<std::size_t>> components;
};

struct RoundResult {
    std::vector<ClusterState> clusters;
    MergeRecord record;
};

/// One Boruvka-style round: every cluster nominates its nearest other
/// cluster (ties to the lower index) and each connected component of the
/// nomination graph becomes a single cluster.
RoundResult affinity_round(std::span<const ClusterState> clusters, std::span<const std::vector<double>> points,
                           Linkage linkage, Metric metric, unsigned threads = 0);

/// Singleton clusters over `points`, in input order.
std::vector<ClusterState> singleton_clusters(std::span<const std::vector<double>> points);

struct RoundStats {
    std::size_t clusters_before = 0;
    std::size_t clusters_after = 0;
    std::size_t min_size_before = 0;
    std::size_t min_size_after = 0;
};

struct ClusteringTrace {
    std::vector<RoundStats> rounds;
};

ClusterTree build_tree(std::span<const EmbeddingVector> embeddings, const ClusteringConfig& cfg,
                       ClusteringTrace* trace = nullptr);

}  // namespace tbdf
