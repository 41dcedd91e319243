#include "genret/io.hpp"

#include <fstream>
#include <sstream>

#include "genret/error.hpp"

namespace genret {

void to_json(Json& j, const Box& box) {
  j = Json{{"x", box.x}, {"y", box.y}, {"w", box.w}, {"h", box.h}};
}

void from_json(const Json& j, Box& box) {
  box.x = j.at("x").get<double>();
  box.y = j.at("y").get<double>();
  box.w = j.at("w").get<double>();
  box.h = j.at("h").get<double>();
}

Json region_to_json(const std::optional<Box>& region) {
  return region ? Json(*region) : Json(nullptr);
}

std::optional<Box> region_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<Box>();
}

std::string id_from_json(const Json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw Error(ErrorKind::Schema, "id must be a string or integer, got " + j.dump());
}

void to_json(Json& j, const RankingInstance& inst) {
  j = Json{{"image_id", inst.image_id},
           {"region", region_to_json(inst.region)},
           {"anchor_kind", std::string(to_string(inst.anchor_kind))},
           {"anchor", inst.anchor},
           {"candidates", inst.candidates},
           {"positives", inst.positives},
           {"negatives_explicit", inst.negatives_explicit ? Json(*inst.negatives_explicit)
                                                          : Json(nullptr)}};
}

void from_json(const Json& j, RankingInstance& inst) {
  try {
    inst.image_id = id_from_json(j.at("image_id"));
    inst.region = j.contains("region") ? region_from_json(j.at("region")) : std::nullopt;
    inst.anchor_kind = anchor_kind_from_string(j.at("anchor_kind").get<std::string>());
    inst.anchor = normalize_word(j.at("anchor").get<std::string>());
    inst.candidates.clear();
    for (const auto& c : j.at("candidates")) inst.candidates.push_back(normalize_word(c.get<std::string>()));
    inst.positives = j.at("positives").get<std::vector<std::size_t>>();
    if (j.contains("negatives_explicit") && !j.at("negatives_explicit").is_null()) {
      inst.negatives_explicit = j.at("negatives_explicit").get<std::vector<std::size_t>>();
    } else {
      inst.negatives_explicit.reset();
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("ranking instance: ") + e.what());
  }
  inst.validate();
}

namespace io {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error(ErrorKind::Io, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "rename to '" + path.string() + "': " + ec.message());
}

Json read_json(const std::filesystem::path& path) {
  auto text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::Schema, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& value) {
  write_text_atomic(path, value.dump(2) + "\n");
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw Error(ErrorKind::Schema, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::string to_jsonl(const std::vector<Json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<RankingInstance> read_instances(const std::filesystem::path& path) {
  std::vector<RankingInstance> out;
  for (const auto& row : read_jsonl(path)) out.push_back(row.get<RankingInstance>());
  return out;
}

void write_instances(const std::filesystem::path& path, const std::vector<RankingInstance>& instances) {
  std::vector<Json> rows(instances.begin(), instances.end());
  write_text_atomic(path, to_jsonl(rows));
}

}  // namespace io
}  // namespace genret
