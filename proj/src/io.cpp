#include "tbdf/io.hpp"

#include <fstream>

namespace tbdf::io {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

std::string id_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    throw Error("identifier must be a string or integer");
}

}  // namespace

void for_each_jsonl(const fs::path& path, const std::function<void(const json&)>& on_record,
                    const std::function<void(std::size_t, const std::string&)>& on_malformed) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
            on_record(rec);
        } catch (const std::exception& e) {
            if (!on_malformed) {
                throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
            on_malformed(lineno, e.what());
        }
    }
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
    auto out = open_out(path);
    for (const auto& r : records) out << r.dump() << '\n';
}

void write_json(const fs::path& path, const json& value) {
    auto out = open_out(path);
    out << value.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::vector<Chunk> read_chunks(const fs::path& path) {
    std::vector<Chunk> out;
    for_each_jsonl(path, [&](const json& r) {
        Chunk c;
        c.chunk_id = id_string(r.at("chunk_id"));
        c.doc_id = id_string(r.at("doc_id"));
        if (r.contains("text") && r["text"].is_string()) c.text = r["text"].get<std::string>();
        c.token_count = r.at("token_count").get<std::int64_t>();
        if (c.token_count < 0) throw Error("negative token_count");
        out.push_back(std::move(c));
    });
    return out;
}

void write_chunks(const fs::path& path, const std::vector<Chunk>& chunks) {
    std::vector<json> recs;
    recs.reserve(chunks.size());
    for (const auto& c : chunks) {
        json r = {{"chunk_id", c.chunk_id}, {"doc_id", c.doc_id}, {"token_count", c.token_count}};
        if (c.text) r["text"] = *c.text;
        recs.push_back(std::move(r));
    }
    write_jsonl(path, recs);
}

std::vector<EmbeddingVector> read_embeddings(const fs::path& path) {
    std::vector<EmbeddingVector> out;
    for_each_jsonl(path, [&](const json& r) {
        EmbeddingVector v;
        v.chunk_id = id_string(r.at("chunk_id"));
        v.values = r.at("values").get<std::vector<double>>();
        if (!out.empty() && out.front().values.size() != v.values.size()) {
            throw Error("embedding dimension mismatch at " + v.chunk_id);
        }
        out.push_back(std::move(v));
    });
    return out;
}

void write_embeddings(const fs::path& path, const std::vector<EmbeddingVector>& vectors) {
    std::vector<json> recs;
    recs.reserve(vectors.size());
    for (const auto& v : vectors) recs.push_back({{"chunk_id", v.chunk_id}, {"values", v.values}});
    write_jsonl(path, recs);
}

std::vector<Document> read_documents(const fs::path& path) {
    std::vector<Document> out;
    for_each_jsonl(path, [&](const json& r) {
        Document d;
        d.doc_id = id_string(r.at("doc_id"));
        for (const auto& c : r.at("chunk_ids")) d.chunk_ids.push_back(id_string(c));
        out.push_back(std::move(d));
    });
    return out;
}

json tree_to_json(const ClusterTree& tree) {
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
        json jn = {{"node_id", n.node_id},
                   {"parent_id", n.parent_id == kNoParent ? json(nullptr) : json(n.parent_id)},
                   {"child_ids", n.child_ids}};
        if (n.is_leaf()) jn["leaf_chunk_ids"] = n.leaf_chunk_ids;
        nodes.push_back(std::move(jn));
    }
    return {{"nodes", std::move(nodes)}, {"root_id", tree.root_id}};
}

ClusterTree tree_from_json(const json& j) {
    std::vector<RawNode> raw;
    try {
        for (const auto& jn : j.at("nodes")) {
            RawNode r;
            r.node_id = jn.at("node_id").get<NodeId>();
            const auto& p = jn.value("parent_id", json(nullptr));
            r.parent_id = p.is_null() ? kNoParent : p.get<NodeId>();
            if (jn.contains("child_ids")) r.child_ids = jn["child_ids"].get<std::vector<NodeId>>();
            if (jn.contains("leaf_chunk_ids")) {
                for (const auto& c : jn["leaf_chunk_ids"]) r.leaf_chunk_ids.push_back(id_string(c));
            }
            raw.push_back(std::move(r));
        }
        return prune_single_child(tree_from_raw(raw, j.at("root_id").get<NodeId>()));
    } catch (const json::exception& e) {
        throw Error(std::string("malformed tree: ") + e.what());
    }
}

ClusterTree read_tree(const fs::path& path) {
    auto in = open_in(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
    return tree_from_json(j);
}

void write_tree(const fs::path& path, const ClusterTree& tree) {
    auto out = open_out(path);
    out << tree_to_json(tree).dump() << '\n';
}

}  // namespace tbdf::io
