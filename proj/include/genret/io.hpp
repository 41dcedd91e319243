#pragma once

// JSON / JSONL serialization of the core records plus small file helpers.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "genret/types.hpp"

namespace genret {

using Json = nlohmann::json;

void to_json(Json& j, const Box& box);
void from_json(const Json& j, Box& box);

// Field names: image_id, region, anchor_kind, anchor, candidates, positives,
// negatives_explicit. Words are normalized on read; the record is validated.
void to_json(Json& j, const RankingInstance& inst);
void from_json(const Json& j, RankingInstance& inst);

Json region_to_json(const std::optional<Box>& region);
std::optional<Box> region_from_json(const Json& j);

// Accepts strings or integers (Visual Genome uses numeric ids).
std::string id_from_json(const Json& j);

namespace io {

std::string read_text(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);

std::vector<Json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<Json>& rows);

std::vector<RankingInstance> read_instances(const std::filesystem::path& path);
void write_instances(const std::filesystem::path& path, const std::vector<RankingInstance>& instances);

}  // namespace io
}  // namespace genret
