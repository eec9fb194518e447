#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "support.hpp"
#include "tbdf/clustering.hpp"
#include "tbdf/io.hpp"

using namespace tbdf;

namespace {

std::vector<EmbeddingVector> gaussian_corpus(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<EmbeddingVector> out;
    for (std::size_t i = 0; i < n; ++i) {
        EmbeddingVector v{"p" + std::to_string(i), std::vector<double>(dim)};
        for (auto& x : v.values) x = g(rng);
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<std::vector<double>> unit_points(const std::vector<EmbeddingVector>& vs) {
    std::vector<std::vector<double>> out;
    for (auto v : vs) {
        normalize(v);
        out.push_back(v.values);
    }
    return out;
}

// Naive reference: each point's nearest other point (ties to the lower index)
// over the full distance matrix, then connected components by flood fill.
std::set<std::set<std::size_t>> naive_components(const std::vector<std::vector<double>>& pts) {
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double d = 0;
            for (std::size_t k = 0; k < pts[i].size(); ++k) d += pts[i][k] * pts[j][k];
            dist[i][j] = 1.0 - d;
        }
    }
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && (best == n || dist[i][j] < dist[i][best])) best = j;
        }
        adj[i].push_back(best);
        adj[best].push_back(i);
    }
    std::vector<bool> seen(n, false);
    std::set<std::set<std::size_t>> comps;
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        std::set<std::size_t> comp;
        std::vector<std::size_t> stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            comp.insert(u);
            for (auto v : adj[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    stack.push_back(v);
                }
            }
        }
        comps.insert(comp);
    }
    return comps;
}

}  // namespace

TEST_CASE("cosine_distance") {
    const EmbeddingVector a{"a", {1, 2, 3}}, e1{"e1", {1, 0}}, e2{"e2", {0, 1}}, neg{"n", {-1, -2, -3}};
    CHECK(cosine_distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_distance(e1, e2) == doctest::Approx(1.0));
    CHECK(cosine_distance(a, neg) == doctest::Approx(2.0));
    const EmbeddingVector zero{"z", {0, 0, 0}};
    CHECK_THROWS_WITH(cosine_distance(a, zero), "degenerate embedding");
}

TEST_CASE("affinity_round basics") {
    SUBCASE("two clusters merge into one") {
        const std::vector<std::vector<double>> pts{{1, 0}, {0, 1}};
        const auto r = affinity_round(singleton_clusters(pts), pts, Linkage::centroid, Metric::cosine);
        REQUIRE(r.clusters.size() == 1);
        CHECK(r.clusters[0].members == std::vector<std::size_t>{0, 1});
    }
    SUBCASE("points on a line") {
        const std::vector<std::vector<double>> pts{{0}, {1}, {10}, {11}};
        for (auto linkage : {Linkage::single, Linkage::centroid}) {
            const auto r = affinity_round(singleton_clusters(pts), pts, linkage, Metric::euclidean);
            CHECK(r.record.nominations == std::vector<std::size_t>{1, 0, 3, 2});
            REQUIRE(r.record.components.size() == 2);
            CHECK(r.record.components[0] == std::vector<std::size_t>{0, 1});
            CHECK(r.record.components[1] == std::vector<std::size_t>{2, 3});
        }
    }
    SUBCASE("ties go to the lower index") {
        const std::vector<std::vector<double>> pts{{0}, {1}, {2}};
        const auto r = affinity_round(singleton_clusters(pts), pts, Linkage::single, Metric::euclidean);
        CHECK(r.record.nominations == std::vector<std::size_t>{1, 0, 1});
        CHECK(r.clusters.size() == 1);
    }
    SUBCASE("fewer than two clusters") {
        const std::vector<std::vector<double>> pts{{1}};
        CHECK_THROWS_WITH(affinity_round(singleton_clusters(pts), pts, Linkage::single, Metric::euclidean),
                          "nothing to merge");
    }
}

TEST_CASE("four tight pairs form the first level") {
    // Pairs along four orthogonal directions, each pair split by a small angle.
    std::vector<EmbeddingVector> vs;
    for (int axis = 0; axis < 4; ++axis) {
        for (int k = 0; k < 2; ++k) {
            std::vector<double> v(4, 0.0);
            v[static_cast<std::size_t>(axis)] = 1.0;
            v[static_cast<std::size_t>((axis + 1) % 4)] = k == 0 ? 0.05 : -0.05;
            vs.push_back({"a" + std::to_string(axis) + "_" + std::to_string(k), v});
        }
    }
    const auto pts = unit_points(vs);
    const auto r = affinity_round(singleton_clusters(pts), pts, Linkage::single, Metric::cosine);
    REQUIRE(r.record.components.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(r.record.components[i] == std::vector<std::size_t>{2 * i, 2 * i + 1});

    ClusteringConfig cfg;
    cfg.max_rounds = 1;
    const auto t = build_tree(vs, cfg);
    const auto& root = t.node(t.root_id);
    REQUIRE(root.child_ids.size() == 4);
    for (NodeId c : root.child_ids) {
        const auto leaves = t.leaves_under(c);
        REQUIRE(leaves.size() == 2);
        CHECK(leaves[0].substr(0, 2) == leaves[1].substr(0, 2));
    }
}

TEST_CASE("single-linkage first round matches the naive nomination graph") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const auto n = static_cast<std::size_t>(2 + rng() % 199);
        const auto pts = unit_points(gaussian_corpus(rng, n, 8));
        const auto r = affinity_round(singleton_clusters(pts), pts, Linkage::single, Metric::cosine, 3);
        std::set<std::set<std::size_t>> got;
        for (const auto& c : r.record.components) got.insert(std::set<std::size_t>(c.begin(), c.end()));
        CHECK(got == naive_components(pts));
    }
}

TEST_CASE("build_tree structure") {
    SUBCASE("one point is a single-node tree") {
        const std::vector<EmbeddingVector> one{{"only", {1, 2}}};
        const auto t = build_tree(one, ClusteringConfig{});
        CHECK(t.size() == 1);
        CHECK(t.node(0).leaf_chunk_ids == std::vector<std::string>{"only"});
    }
    SUBCASE("no data") {
        CHECK_THROWS_WITH(build_tree(std::vector<EmbeddingVector>{}, ClusteringConfig{}), "no data");
    }
    SUBCASE("doubling, depth bound, leaf preservation") {
        std::mt19937_64 rng(1);
        for (int trial = 0; trial < 5; ++trial) {
            const auto n = static_cast<std::size_t>(64 + rng() % 400);
            const auto vs = gaussian_corpus(rng, n, 16);
            for (auto linkage : {Linkage::centroid, Linkage::single}) {
                ClusteringConfig cfg;
                cfg.linkage = linkage;
                ClusteringTrace trace;
                const auto t = build_tree(vs, cfg, &trace);
                CHECK(t.max_depth() <= 6);
                CHECK(trace.rounds.size() <= 5);
                for (const auto& r : trace.rounds) {
                    CHECK(r.min_size_after >= 2 * r.min_size_before);
                    CHECK(r.clusters_after < r.clusters_before);
                }
                auto leaves = t.leaves_under(t.root_id);
                std::sort(leaves.begin(), leaves.end());
                std::vector<std::string> want;
                for (const auto& v : vs) want.push_back(v.chunk_id);
                std::sort(want.begin(), want.end());
                CHECK(leaves == want);
                for (const auto& node : t.nodes) CHECK(node.child_ids.size() != 1);
            }
        }
    }
    SUBCASE("target cluster count stops early") {
        std::mt19937_64 rng(2);
        const auto vs = gaussian_corpus(rng, 300, 8);
        ClusteringConfig cfg;
        cfg.target_cluster_count = 40;
        ClusteringTrace trace;
        const auto t = build_tree(vs, cfg, &trace);
        REQUIRE_FALSE(trace.rounds.empty());
        CHECK(trace.rounds.back().clusters_after <= 40);
        if (trace.rounds.size() > 1) CHECK(trace.rounds[trace.rounds.size() - 2].clusters_after > 40);
        CHECK(t.node(t.root_id).child_ids.size() == trace.rounds.back().clusters_after);
    }
    SUBCASE("max_rounds bounds depth") {
        std::mt19937_64 rng(4);
        const auto vs = gaussian_corpus(rng, 200, 8);
        for (int rounds = 1; rounds <= 3; ++rounds) {
            ClusteringConfig cfg;
            cfg.max_rounds = rounds;
            CHECK(build_tree(vs, cfg).max_depth() <= rounds + 1);
        }
    }
}

TEST_CASE("build_tree is deterministic regardless of thread count") {
    std::mt19937_64 rng(8);
    const auto vs = gaussian_corpus(rng, 500, 12);
    ClusteringConfig a, b;
    a.threads = 1;
    b.threads = 6;
    CHECK(io::tree_to_json(build_tree(vs, a)).dump() == io::tree_to_json(build_tree(vs, b)).dump());
}

TEST_CASE("config validation") {
    ClusteringConfig cfg;
    cfg.max_rounds = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.max_rounds = 2;
    cfg.target_cluster_count = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
