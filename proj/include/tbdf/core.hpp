#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tbdf {

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (CLI maps this to exit code 2).
class ConfigError : public Error {
   public:
    using Error::Error;
};

using NodeId = std::int64_t;
inline constexpr NodeId kNoParent = -1;

struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::optional<std::string> text;
    std::int64_t token_count = 0;
};

struct Document {
    std::string doc_id;
    std::vector<std::string> chunk_ids;
    std::optional<double> score;
};

struct EmbeddingVector {
    std::string chunk_id;
    std::vector<double> values;
};

/// Scales `v` to unit Euclidean norm. Throws on a zero vector.
void normalize(EmbeddingVector& v);

struct Node {
    NodeId node_id = 0;
    NodeId parent_id = kNoParent;
    std::vector<NodeId> child_ids;
    /// Non-empty only on leaves; a leaf carries exactly one chunk.
    std::vector<std::string> leaf_chunk_ids;
    std::int64_t leaf_count = 0;
    std::int64_t depth = 0;

    bool is_leaf() const { return child_ids.empty(); }
};

/// Hierarchical clustering whose leaves are chunks.
///
/// Node ids are dense: `nodes[i].node_id == i`. Trees produced by
/// `prune_single_child` (and therefore by clustering and by the tree loader)
/// are canonical: ids are assigned breadth-first from the root, children
/// keep their relative order, and no internal node has a single child.
struct ClusterTree {
    std::vector<Node> nodes;
    NodeId root_id = 0;

    const Node& node(NodeId id) const;
    std::size_t size() const { return nodes.size(); }
    std::int64_t corpus_size() const { return node(root_id).leaf_count; }
    std::int64_t max_depth() const;

    /// Chunk ids under `id` in depth-first order.
    std::vector<std::string> leaves_under(NodeId id) const;
    /// Node ids grouped by depth; index 0 holds the root.
    std::vector<std::vector<NodeId>> levels() const;
};

/// Checks one root, consistent parent/child links, no cycles, and
/// exactly one chunk per leaf. Throws `Error("malformed tree: ...")`.
void check_structure(const ClusterTree& tree);

/// Collapses every node with a single child into that child and renumbers
/// the result canonically. Recomputes leaf counts and depths.
ClusterTree prune_single_child(const ClusterTree& tree);

/// Node as it appears in a tree file: ids are arbitrary unique integers.
struct RawNode {
    NodeId node_id = 0;
    NodeId parent_id = kNoParent;
    std::vector<NodeId> child_ids;
    std::vector<std::string> leaf_chunk_ids;
};

/// Remaps ids densely (ascending original id) and validates structure.
/// The result is not pruned.
ClusterTree tree_from_raw(const std::vector<RawNode>& raw, NodeId root_id);

struct Cut {
    std::vector<NodeId> node_ids;
    std::size_t complexity() const { return node_ids.size(); }
};

/// True iff the leaf sets of the cut's nodes partition the corpus.
bool validate_cut(const ClusterTree& tree, const Cut& cut);

struct OrdinalScore {
    /// -1 marks an oracle failure.
    int level = 0;
    double normalized = 0.0;

    static OrdinalScore from_level(int level, int levels);
    /// Real-valued label in [0,1]; `level` is the nearest ordinal bin.
    static OrdinalScore from_value(double value, int levels);
    static OrdinalScore failure() { return {-1, 0.0}; }
    bool failed() const { return level < 0; }

    friend bool operator==(const OrdinalScore&, const OrdinalScore&) = default;
};

double mean_quality(std::span<const double> scores);

}  // namespace tbdf
