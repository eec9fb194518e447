#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tbdf/core.hpp"

namespace tbdf::io {

using json = nlohmann::json;

/// Calls `on_record` for each non-blank line parsed as JSON. Lines that fail
/// to parse are passed to `on_malformed` with their 1-based line number; if
/// it is empty, a parse failure throws.
void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const json&)>& on_record,
                    const std::function<void(std::size_t, const std::string&)>& on_malformed = {});

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);
void write_json(const std::filesystem::path& path, const json& value);
json read_json(const std::filesystem::path& path);

std::vector<Chunk> read_chunks(const std::filesystem::path& path);
void write_chunks(const std::filesystem::path& path, const std::vector<Chunk>& chunks);

std::vector<EmbeddingVector> read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingVector>& vectors);

std::vector<Document> read_documents(const std::filesystem::path& path);

/// Tree file: a single JSON object {nodes:[...], root_id}. Loading
/// validates and prunes, so ids in the result are canonical.
json tree_to_json(const ClusterTree& tree);
ClusterTree tree_from_json(const json& j);
ClusterTree read_tree(const std::filesystem::path& path);
void write_tree(const std::filesystem::path& path, const ClusterTree& tree);

}  // namespace tbdf::io
