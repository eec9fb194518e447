#pragma once

// Shared fixtures for the unit and acceptance tests: temporary directories,
// the 8-leaf example tree, a random tree generator, and an exact top-down
// reference for the filter.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "tbdf/core.hpp"
#include "tbdf/filter.hpp"

#ifndef TBDF_ORACLE_DIR
#define TBDF_ORACLE_DIR "tests/oracles"
#endif

namespace tbdf::testing {

namespace fs = std::filesystem;
using nlohmann::json;

class TempDir {
   public:
    explicit TempDir(const std::string& tag = "tbdf") {
        std::random_device rd;
        path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

   private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

inline json reference_values() {
    std::ifstream in(fs::path(TBDF_ORACLE_DIR) / "reference_values.json");
    return json::parse(in);
}

/// The 8-leaf example: root -> {n2, r}; r -> {n3, p}; p -> {n1, n4};
/// n1 -> {x1, m}, m -> {x2, x3}; n3 -> {x5, x6}; n4 -> {x7, x8}; n2 = x4.
/// Labels x1 = 1, x7 = x8 = 1, all others 0.
struct Fig1 {
    ClusterTree tree;
    std::map<std::string, int> labels;
    NodeId n1 = 0, n2 = 0, n3 = 0, n4 = 0;
};

inline Fig1 fig1() {
    // original ids: 0 root, 1 r, 2 p, 3 n1, 4 m, 5 n3, 6 n4, leaves 11..18 = x1..x8
    std::vector<RawNode> raw = {
        {0, kNoParent, {14, 1}, {}},
        {1, 0, {5, 2}, {}},
        {2, 1, {3, 6}, {}},
        {3, 2, {11, 4}, {}},
        {4, 3, {12, 13}, {}},
        {5, 1, {15, 16}, {}},
        {6, 2, {17, 18}, {}},
    };
    const NodeId leaf_parent[] = {3, 4, 4, 0, 5, 5, 6, 6};
    for (int i = 1; i <= 8; ++i) raw.push_back({10 + i, leaf_parent[i - 1], {}, {"x" + std::to_string(i)}});

    Fig1 f;
    f.tree = prune_single_child(tree_from_raw(raw, 0));
    for (int i = 1; i <= 8; ++i) f.labels["x" + std::to_string(i)] = (i == 1 || i == 7 || i == 8) ? 1 : 0;
    auto find_by_leaves = [&](std::vector<std::string> want) {
        std::sort(want.begin(), want.end());
        for (const auto& n : f.tree.nodes) {
            auto got = f.tree.leaves_under(n.node_id);
            std::sort(got.begin(), got.end());
            if (got == want) return n.node_id;
        }
        return NodeId{-1};
    };
    f.n1 = find_by_leaves({"x1", "x2", "x3"});
    f.n2 = find_by_leaves({"x4"});
    f.n3 = find_by_leaves({"x5", "x6"});
    f.n4 = find_by_leaves({"x7", "x8"});
    return f;
}

/// Random tree over `n_leaves` leaves named "l<i>": clusters are merged in
/// random groups of 2..max_fanout until one remains, occasionally wrapped in
/// single-child nodes, and original ids are shuffled. Returned pruned.
inline ClusterTree random_tree(std::mt19937_64& rng, std::int64_t n_leaves, int max_fanout = 4) {
    std::vector<RawNode> raw;  // raw[i].node_id == i until the final relabel
    std::vector<NodeId> open;
    NodeId next = 0;
    for (std::int64_t i = 0; i < n_leaves; ++i) {
        raw.push_back({next, kNoParent, {}, {"l" + std::to_string(i)}});
        open.push_back(next++);
    }
    auto adopt = [&](const std::vector<NodeId>& kids) {
        for (NodeId c : kids) raw[static_cast<std::size_t>(c)].parent_id = next;
        raw.push_back({next, kNoParent, kids, {}});
        return next++;
    };
    std::bernoulli_distribution chain(0.1);
    while (open.size() > 1) {
        std::shuffle(open.begin(), open.end(), rng);
        std::uniform_int_distribution<std::size_t> fan(2, std::min<std::size_t>(open.size(), max_fanout));
        const std::size_t k = fan(rng);
        std::vector<NodeId> kids;
        for (std::size_t i = 0; i < k; ++i) {
            NodeId c = open.back();
            open.pop_back();
            if (chain(rng)) c = adopt({c});
            kids.push_back(c);
        }
        open.push_back(adopt(kids));
    }
    // Relabel ids with a random permutation so raw order carries no structure.
    std::vector<NodeId> perm(raw.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<NodeId>(i) * 3 + 7;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (auto& r : raw) {
        r.node_id = perm[static_cast<std::size_t>(r.node_id)];
        if (r.parent_id != kNoParent) r.parent_id = perm[static_cast<std::size_t>(r.parent_id)];
        for (auto& c : r.child_ids) c = perm[static_cast<std::size_t>(c)];
    }
    return prune_single_child(tree_from_raw(raw, perm[static_cast<std::size_t>(open.front())]));
}

/// Exact top-down thresholding: every node's mean comes from its own label
/// sum, nodes are visited breadth-first with children in ascending id, and
/// the keep/discard/split rule plus the leaf policy are applied directly.
struct ReferenceResult {
    std::vector<std::tuple<NodeId, std::string, double>> cut;
    std::map<std::string, std::pair<std::string, double>> chunks;  // id -> (decision, score)
    std::map<std::string, NodeId> chunk_node;
};

inline ReferenceResult reference_filter(const ClusterTree& tree, const std::map<std::string, int>& levels, int L,
                                        double alpha, double beta, LeafPolicy policy) {
    std::vector<std::int64_t> sum(tree.size(), 0), count(tree.size(), 0);
    std::vector<NodeId> order;
    std::deque<NodeId> q{tree.root_id};
    while (!q.empty()) {
        NodeId id = q.front();
        q.pop_front();
        order.push_back(id);
        for (NodeId c : tree.nodes[static_cast<std::size_t>(id)].child_ids) q.push_back(c);
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const auto& n = tree.nodes[static_cast<std::size_t>(*it)];
        if (n.child_ids.empty()) {
            sum[*it] = std::max(0, levels.at(n.leaf_chunk_ids.at(0)));
            count[*it] = 1;
        }
        for (NodeId c : n.child_ids) {
            sum[*it] += sum[c];
            count[*it] += count[c];
        }
    }
    auto collect = [&](NodeId id, auto&& self, std::vector<std::string>& acc) -> void {
        const auto& n = tree.nodes[static_cast<std::size_t>(id)];
        if (n.child_ids.empty()) acc.push_back(n.leaf_chunk_ids.at(0));
        for (NodeId c : n.child_ids) self(c, self, acc);
    };

    ReferenceResult r;
    std::deque<NodeId> active{tree.root_id};
    while (!active.empty()) {
        const NodeId id = active.front();
        active.pop_front();
        const auto& n = tree.nodes[static_cast<std::size_t>(id)];
        const double mean =
            static_cast<double>(sum[id]) / (static_cast<double>(L - 1) * static_cast<double>(count[id]));
        std::string d;
        if (mean >= 1.0 - beta) {
            d = "keep";
        } else if (mean <= alpha) {
            d = "discard";
        } else if (!n.child_ids.empty()) {
            auto kids = n.child_ids;
            std::sort(kids.begin(), kids.end());
            for (NodeId c : kids) active.push_back(c);
            continue;
        } else {
            d = (policy == LeafPolicy::midpoint && mean >= (alpha + 1.0 - beta) / 2.0) ? "keep" : "discard";
        }
        r.cut.emplace_back(id, d, mean);
        std::vector<std::string> leaves;
        collect(id, collect, leaves);
        for (const auto& c : leaves) {
            r.chunks[c] = {d, mean};
            r.chunk_node[c] = id;
        }
    }
    return r;
}

}  // namespace tbdf::testing
