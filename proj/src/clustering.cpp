#include "tbdf/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "parallel.hpp"

namespace tbdf {

void ClusteringConfig::validate() const {
    if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
    if (target_cluster_count && *target_cluster_count < 1) throw ConfigError("target_cluster_count must be >= 1");
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error("embedding dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) throw Error("degenerate embedding");
    const double d = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(d, 0.0, 2.0);
}

double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_distance(std::span<const double>(a.values), std::span<const double>(b.values));
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Points handed to the distance are already unit-norm under cosine.
double point_distance(std::span<const double> a, std::span<const double> b, Metric metric) {
    if (metric == Metric::cosine) return 1.0 - dot(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

std::vector<double> centroid_of(const ClusterState& c, Metric metric) {
    std::vector<double> out = c.sum;
    if (metric == Metric::cosine) {
        const double n = std::sqrt(dot(out, out));
        if (n > 0.0) {
            for (double& x : out) x /= n;
        }
    } else {
        for (double& x : out) x /= static_cast<double>(c.size());
    }
    return out;
}

struct Nearest {
    double distance = std::numeric_limits<double>::infinity();
    std::size_t cluster = std::numeric_limits<std::size_t>::max();

    void offer(double d, std::size_t j) {
        if (d < distance || (d == distance && j < cluster)) {
            distance = d;
            cluster = j;
        }
    }
};

std::vector<std::size_t> nominate_centroid(std::span<const ClusterState> clusters, Metric metric, unsigned threads) {
    std::vector<std::vector<double>> centroids;
    centroids.reserve(clusters.size());
    for (const auto& c : clusters) centroids.push_back(centroid_of(c, metric));
    std::vector<std::size_t> out(clusters.size());
    detail::parallel_for(clusters.size(), threads, [&](std::size_t i) {
        Nearest best;
        for (std::size_t j = 0; j < clusters.size(); ++j) {
            if (j == i) continue;
            // A zero cosine centroid has no direction; treat it as orthogonal.
            double d = point_distance(centroids[i], centroids[j], metric);
            if (metric == Metric::cosine && (dot(centroids[i], centroids[i]) == 0.0 ||
                                             dot(centroids[j], centroids[j]) == 0.0)) {
                d = 1.0;
            }
            best.offer(d, j);
        }
        out[i] = best.cluster;
    });
    return out;
}

std::vector<std::size_t> nominate_single(std::span<const ClusterState> clusters,
                                         std::span<const std::vector<double>> points, Metric metric,
                                         unsigned threads) {
    std::vector<std::size_t> owner(points.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (std::size_t p : clusters[c].members) owner[p] = c;
    }
    std::vector<std::size_t> out(clusters.size());
    detail::parallel_for(clusters.size(), threads, [&](std::size_t i) {
        Nearest best;
        for (std::size_t p : clusters[i].members) {
            for (std::size_t q = 0; q < points.size(); ++q) {
                const std::size_t oq = owner[q];
                if (oq == i || oq == std::numeric_limits<std::size_t>::max()) continue;
                best.offer(point_distance(points[p], points[q], metric), oq);
            }
        }
        out[i] = best.cluster;
    });
    return out;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

std::size_t min_size(std::span<const ClusterState> clusters) {
    std::size_t m = std::numeric_limits<std::size_t>::max();
    for (const auto& c : clusters) m = std::min(m, c.size());
    return m;
}

}  // namespace

std::vector<ClusterState> singleton_clusters(std::span<const std::vector<double>> points) {
    std::vector<ClusterState> out;
    out.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out.push_back({{i}, points[i]});
    return out;
}

RoundResult affinity_round(std::span<const ClusterState> clusters, std::span<const std::vector<double>> points,
                           Linkage linkage, Metric metric, unsigned threads) {
    if (clusters.size() < 2) throw Error("nothing to merge");

    RoundResult result;
    auto& rec = result.record;
    rec.nominations = linkage == Linkage::single ? nominate_single(clusters, points, metric, threads)
                                                 : nominate_centroid(clusters, metric, threads);

    std::vector<std::size_t> parent(clusters.size());
    std::iota(parent.begin(), parent.end(), 0);
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        const std::size_t a = find_root(parent, i);
        const std::size_t b = find_root(parent, rec.nominations[i]);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
    // Roots are the smallest member of each component after min-linking, so
    // scanning in index order yields components ordered by smallest member.
    std::vector<std::size_t> slot(clusters.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        const std::size_t r = find_root(parent, i);
        if (slot[r] == std::numeric_limits<std::size_t>::max()) {
            slot[r] = rec.components.size();
            rec.components.emplace_back();
        }
        rec.components[slot[r]].push_back(i);
    }

    result.clusters.reserve(rec.components.size());
    for (const auto& comp : rec.components) {
        ClusterState merged;
        merged.sum.assign(clusters[comp.front()].sum.size(), 0.0);
        for (std::size_t c : comp) {
            const auto& src = clusters[c];
            merged.members.insert(merged.members.end(), src.members.begin(), src.members.end());
            for (std::size_t k = 0; k < src.sum.size(); ++k) merged.sum[k] += src.sum[k];
        }
        std::sort(merged.members.begin(), merged.members.end());
        result.clusters.push_back(std::move(merged));
    }
    return result;
}

ClusterTree build_tree(std::span<const EmbeddingVector> embeddings, const ClusteringConfig& cfg,
                       ClusteringTrace* trace) {
    cfg.validate();
    if (embeddings.empty()) throw Error("no data");

    const std::size_t dim = embeddings.front().values.size();
    std::vector<std::vector<double>> points;
    points.reserve(embeddings.size());
    std::unordered_set<std::string> ids;
    for (const auto& e : embeddings) {
        if (e.values.size() != dim) throw Error("embedding dimension mismatch at " + e.chunk_id);
        if (!ids.insert(e.chunk_id).second) throw Error("duplicate chunk id " + e.chunk_id);
        if (cfg.metric == Metric::cosine) {
            EmbeddingVector copy = e;
            normalize(copy);
            points.push_back(std::move(copy.values));
        } else {
            points.push_back(e.values);
        }
    }

    // Nodes are created leaves-first; prune_single_child renumbers at the end.
    ClusterTree raw;
    raw.nodes.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        raw.nodes[i].node_id = static_cast<NodeId>(i);
        raw.nodes[i].leaf_chunk_ids = {embeddings[i].chunk_id};
    }
    std::vector<NodeId> cluster_node(points.size());
    std::iota(cluster_node.begin(), cluster_node.end(), NodeId{0});

    auto add_parent = [&raw](const std::vector<NodeId>& children) {
        const auto id = static_cast<NodeId>(raw.nodes.size());
        Node n;
        n.node_id = id;
        n.child_ids = children;
        for (NodeId c : children) raw.nodes[static_cast<std::size_t>(c)].parent_id = id;
        raw.nodes.push_back(std::move(n));
        return id;
    };

    auto clusters = singleton_clusters(points);
    auto reached_target = [&] {
        return cfg.target_cluster_count && static_cast<std::int64_t>(clusters.size()) <= *cfg.target_cluster_count;
    };
    for (int round = 0; round < cfg.max_rounds && clusters.size() > 1 && !reached_target(); ++round) {
        RoundStats stats{clusters.size(), 0, min_size(clusters), 0};
        auto res = affinity_round(clusters, points, cfg.linkage, cfg.metric, cfg.threads);
        std::vector<NodeId> next_nodes;
        next_nodes.reserve(res.record.components.size());
        for (const auto& comp : res.record.components) {
            std::vector<NodeId> children;
            children.reserve(comp.size());
            for (std::size_t c : comp) children.push_back(cluster_node[c]);
            next_nodes.push_back(add_parent(children));
        }
        clusters = std::move(res.clusters);
        cluster_node = std::move(next_nodes);
        stats.clusters_after = clusters.size();
        stats.min_size_after = min_size(clusters);
        if (trace) trace->rounds.push_back(stats);
    }
    raw.root_id = cluster_node.size() == 1 ? cluster_node.front() : add_parent(cluster_node);
    return prune_single_child(raw);
}

}  // namespace tbdf
