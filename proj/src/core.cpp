#include "tbdf/core.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace tbdf {

void normalize(EmbeddingVector& v) {
    double sq = 0.0;
    for (double x : v.values) sq += x * x;
    if (!(sq > 0.0) || !std::isfinite(sq)) throw Error("degenerate embedding: " + v.chunk_id);
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v.values) x *= inv;
}

const Node& ClusterTree::node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes.size()) throw Error("node not in tree");
    return nodes[static_cast<std::size_t>(id)];
}

std::int64_t ClusterTree::max_depth() const {
    std::int64_t d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
}

std::vector<std::string> ClusterTree::leaves_under(NodeId id) const {
    std::vector<std::string> out;
    std::vector<NodeId> stack{id};
    while (!stack.empty()) {
        const Node& n = node(stack.back());
        stack.pop_back();
        if (n.is_leaf()) {
            out.insert(out.end(), n.leaf_chunk_ids.begin(), n.leaf_chunk_ids.end());
            continue;
        }
        for (auto it = n.child_ids.rbegin(); it != n.child_ids.rend(); ++it) stack.push_back(*it);
    }
    return out;
}

std::vector<std::vector<NodeId>> ClusterTree::levels() const {
    std::vector<std::vector<NodeId>> out;
    std::deque<NodeId> queue{root_id};
    while (!queue.empty()) {
        const Node& n = node(queue.front());
        queue.pop_front();
        const auto d = static_cast<std::size_t>(n.depth);
        if (out.size() <= d) out.resize(d + 1);
        out[d].push_back(n.node_id);
        for (NodeId c : n.child_ids) queue.push_back(c);
    }
    return out;
}

namespace {

[[noreturn]] void malformed(const std::string& why) { throw Error("malformed tree: " + why); }

// Fills depth and leaf_count top-down / bottom-up. Assumes structure is valid.
void recompute_counts(ClusterTree& tree) {
    std::vector<NodeId> order;
    order.reserve(tree.nodes.size());
    std::deque<NodeId> queue{tree.root_id};
    tree.nodes[static_cast<std::size_t>(tree.root_id)].depth = 0;
    while (!queue.empty()) {
        NodeId id = queue.front();
        queue.pop_front();
        order.push_back(id);
        auto& n = tree.nodes[static_cast<std::size_t>(id)];
        for (NodeId c : n.child_ids) {
            tree.nodes[static_cast<std::size_t>(c)].depth = n.depth + 1;
            queue.push_back(c);
        }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto& n = tree.nodes[static_cast<std::size_t>(*it)];
        if (n.is_leaf()) {
            n.leaf_count = static_cast<std::int64_t>(n.leaf_chunk_ids.size());
        } else {
            n.leaf_count = 0;
            for (NodeId c : n.child_ids) n.leaf_count += tree.nodes[static_cast<std::size_t>(c)].leaf_count;
        }
    }
}

}  // namespace

void check_structure(const ClusterTree& tree) {
    const auto n = tree.nodes.size();
    if (n == 0) malformed("no nodes");
    for (std::size_t i = 0; i < n; ++i) {
        if (tree.nodes[i].node_id != static_cast<NodeId>(i)) malformed("node ids are not dense");
    }
    if (tree.root_id < 0 || static_cast<std::size_t>(tree.root_id) >= n) malformed("root id out of range");
    std::size_t roots = 0;
    for (const auto& node : tree.nodes) {
        if (node.parent_id == kNoParent) {
            ++roots;
        } else if (node.parent_id < 0 || static_cast<std::size_t>(node.parent_id) >= n) {
            malformed("parent id out of range");
        }
        if (node.is_leaf() && node.leaf_chunk_ids.size() != 1) malformed("leaf must hold exactly one chunk");
        if (!node.is_leaf() && !node.leaf_chunk_ids.empty()) malformed("internal node holds chunks");
    }
    if (roots != 1 || tree.node(tree.root_id).parent_id != kNoParent) malformed("expected exactly one root");

    std::vector<bool> seen(n, false);
    std::deque<NodeId> queue{tree.root_id};
    seen[static_cast<std::size_t>(tree.root_id)] = true;
    std::size_t visited = 0;
    std::unordered_set<std::string> chunks;
    while (!queue.empty()) {
        const Node& node = tree.node(queue.front());
        queue.pop_front();
        ++visited;
        for (const auto& c : node.leaf_chunk_ids) {
            if (!chunks.insert(c).second) malformed("duplicate chunk id " + c);
        }
        for (NodeId c : node.child_ids) {
            if (c < 0 || static_cast<std::size_t>(c) >= n) malformed("child id out of range");
            if (seen[static_cast<std::size_t>(c)]) malformed("cycle or shared child");
            if (tree.node(c).parent_id != node.node_id) malformed("parent/child links disagree");
            seen[static_cast<std::size_t>(c)] = true;
            queue.push_back(c);
        }
    }
    if (visited != n) malformed("unreachable nodes");
}

ClusterTree tree_from_raw(const std::vector<RawNode>& raw, NodeId root_id) {
    std::vector<NodeId> ids;
    ids.reserve(raw.size());
    for (const auto& r : raw) ids.push_back(r.node_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) malformed("duplicate node id");
    std::unordered_map<NodeId, NodeId> dense;
    for (std::size_t i = 0; i < ids.size(); ++i) dense.emplace(ids[i], static_cast<NodeId>(i));
    auto remap = [&](NodeId id) {
        auto it = dense.find(id);
        if (it == dense.end()) malformed("unknown node id " + std::to_string(id));
        return it->second;
    };

    ClusterTree tree;
    tree.nodes.resize(raw.size());
    for (const auto& r : raw) {
        Node& n = tree.nodes[static_cast<std::size_t>(remap(r.node_id))];
        n.node_id = remap(r.node_id);
        n.parent_id = r.parent_id == kNoParent ? kNoParent : remap(r.parent_id);
        for (NodeId c : r.child_ids) n.child_ids.push_back(remap(c));
        n.leaf_chunk_ids = r.leaf_chunk_ids;
    }
    tree.root_id = raw.empty() ? 0 : remap(root_id);
    check_structure(tree);
    recompute_counts(tree);
    return tree;
}

ClusterTree prune_single_child(const ClusterTree& tree) {
    check_structure(tree);
    auto skip = [&](NodeId id) {
        while (tree.node(id).child_ids.size() == 1) id = tree.node(id).child_ids.front();
        return id;
    };

    ClusterTree out;
    // (old id, new parent id)
    std::deque<std::pair<NodeId, NodeId>> queue{{skip(tree.root_id), kNoParent}};
    while (!queue.empty()) {
        auto [old_id, parent] = queue.front();
        queue.pop_front();
        const Node& src = tree.node(old_id);
        Node n;
        n.node_id = static_cast<NodeId>(out.nodes.size());
        n.parent_id = parent;
        n.leaf_chunk_ids = src.leaf_chunk_ids;
        if (parent != kNoParent) out.nodes[static_cast<std::size_t>(parent)].child_ids.push_back(n.node_id);
        for (NodeId c : src.child_ids) queue.emplace_back(skip(c), n.node_id);
        out.nodes.push_back(std::move(n));
    }
    out.root_id = 0;
    recompute_counts(out);
    return out;
}

bool validate_cut(const ClusterTree& tree, const Cut& cut) {
    std::unordered_set<std::string> covered;
    std::int64_t total = 0;
    for (NodeId id : cut.node_ids) {
        (void)tree.node(id);
        for (auto& c : tree.leaves_under(id)) {
            if (!covered.insert(std::move(c)).second) return false;
            ++total;
        }
    }
    return total == tree.corpus_size();
}

OrdinalScore OrdinalScore::from_level(int level, int levels) {
    if (levels < 2) throw ConfigError("ordinal scale needs at least 2 levels");
    if (level < -1 || level > levels - 1) throw Error("ordinal level out of range: " + std::to_string(level));
    return {level, static_cast<double>(std::max(level, 0)) / static_cast<double>(levels - 1)};
}

OrdinalScore OrdinalScore::from_value(double value, int levels) {
    if (levels < 2) throw ConfigError("ordinal scale needs at least 2 levels");
    if (!(value >= 0.0 && value <= 1.0)) throw Error("quality value outside [0,1]");
    const int level = static_cast<int>(std::lround(value * (levels - 1)));
    return {level, value};
}

double mean_quality(std::span<const double> scores) {
    if (scores.empty()) throw Error("empty set has no mean");
    return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

}  // namespace tbdf
