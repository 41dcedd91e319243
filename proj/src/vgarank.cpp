#include "genret/vgarank.hpp"

#include <algorithm>
#include <exception>
#include <set>
#include <sstream>

#include "genret/error.hpp"
#include "genret/parallel.hpp"
#include "genret/random.hpp"

namespace genret {

// ---------------------------------------------------------------------------
// Scene-graph I/O

namespace {

SceneGraphRecord parse_image(const Json& img) {
  SceneGraphRecord rec;
  rec.image_id = id_from_json(img.at("image_id"));
  if (!img.contains("objects")) return rec;
  for (const auto& obj : img.at("objects")) {
    AnnotatedBox b;
    if (obj.contains("object_id")) b.object_id = id_from_json(obj.at("object_id"));
    b.box = Box{obj.value("x", 0.0), obj.value("y", 0.0), obj.value("w", 0.0), obj.value("h", 0.0)};
    if (obj.contains("names")) {
      for (const auto& n : obj.at("names")) {
        auto word = normalize_word(n.get<std::string>());
        if (!word.empty()) {
          b.object = std::move(word);
          break;
        }
      }
    }
    if (b.object.empty()) continue;
    std::set<std::string> seen;
    if (obj.contains("attributes") && !obj.at("attributes").is_null()) {
      for (const auto& a : obj.at("attributes")) {
        auto word = normalize_word(a.get<std::string>());
        if (!word.empty() && seen.insert(word).second) b.attributes.push_back(std::move(word));
      }
    }
    rec.boxes.push_back(std::move(b));
  }
  return rec;
}

}  // namespace

std::vector<SceneGraphRecord> parse_scene_graphs(const Json& doc) {
  std::vector<SceneGraphRecord> out;
  try {
    if (doc.is_array()) {
      for (const auto& img : doc) out.push_back(parse_image(img));
    } else {
      out.push_back(parse_image(doc));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("scene graph: ") + e.what());
  }
  return out;
}

Json scene_graphs_to_json(const std::vector<SceneGraphRecord>& records) {
  Json doc = Json::array();
  for (const auto& rec : records) {
    Json objects = Json::array();
    for (const auto& b : rec.boxes) {
      objects.push_back({{"object_id", b.object_id},
                         {"x", b.box.x},
                         {"y", b.box.y},
                         {"w", b.box.w},
                         {"h", b.box.h},
                         {"names", Json::array({b.object})},
                         {"attributes", b.attributes}});
    }
    doc.push_back({{"image_id", rec.image_id}, {"objects", std::move(objects)}});
  }
  return doc;
}

std::string_view to_string(BuildMode mode) {
  return mode == BuildMode::Attribute ? "attribute" : "object";
}

BuildMode build_mode_from_string(std::string_view text) {
  if (text == "attribute" || text == "A") return BuildMode::Attribute;
  if (text == "object" || text == "O") return BuildMode::Object;
  throw Error(ErrorKind::Configuration, "unknown build mode '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Co-occurrence statistics

void CooccurrenceStats::add(const SceneGraphRecord& record) {
  for (const auto& b : record.boxes) {
    ++object_counts_[b.object];
    ++object_total_;
    for (const auto& a : b.attributes) {
      ++by_object_[b.object][a];
      ++by_attribute_[a][b.object];
      ++attribute_counts_[a];
      ++attribute_total_;
    }
  }
}

void CooccurrenceStats::merge(const CooccurrenceStats& other) {
  for (const auto& [o, row] : other.by_object_)
    for (const auto& [a, n] : row) by_object_[o][a] += n;
  for (const auto& [a, row] : other.by_attribute_)
    for (const auto& [o, n] : row) by_attribute_[a][o] += n;
  for (const auto& [o, n] : other.object_counts_) object_counts_[o] += n;
  for (const auto& [a, n] : other.attribute_counts_) attribute_counts_[a] += n;
  object_total_ += other.object_total_;
  attribute_total_ += other.attribute_total_;
}

CooccurrenceStats CooccurrenceStats::build(const std::vector<SceneGraphRecord>& records) {
  CooccurrenceStats stats;
  for (const auto& r : records) stats.add(r);
  if (stats.object_total_ == 0) throw Error(ErrorKind::Stats, "no annotated boxes in record stream");
  return stats;
}

namespace {

template <class Map, class Key>
auto lookup(const Map& m, const Key& k) -> const typename Map::mapped_type* {
  auto it = m.find(k);
  return it == m.end() ? nullptr : &it->second;
}

double row_probability(const std::map<std::string, std::map<std::string, std::uint64_t>>& table,
                       const std::string& given, const std::string& word) {
  const auto* row = lookup(table, given);
  if (!row) return 0.0;
  std::uint64_t total = 0;
  for (const auto& [w, n] : *row) total += n;
  const auto* n = lookup(*row, word);
  return n ? static_cast<double>(*n) / static_cast<double>(total) : 0.0;
}

std::vector<std::pair<std::string, double>> sorted_desc(std::vector<std::pair<std::string, double>> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return v;
}

}  // namespace

std::uint64_t CooccurrenceStats::pair_count(const std::string& object, const std::string& attribute) const {
  const auto* row = lookup(by_object_, object);
  if (!row) return 0;
  const auto* n = lookup(*row, attribute);
  return n ? *n : 0;
}

double CooccurrenceStats::p_attribute_given_object(const std::string& attribute,
                                                   const std::string& object) const {
  return row_probability(by_object_, object, attribute);
}

double CooccurrenceStats::p_object_given_attribute(const std::string& object,
                                                   const std::string& attribute) const {
  return row_probability(by_attribute_, attribute, object);
}

double CooccurrenceStats::object_prior(const std::string& object) const {
  const auto* n = lookup(object_counts_, object);
  return n && object_total_ ? static_cast<double>(*n) / static_cast<double>(object_total_) : 0.0;
}

double CooccurrenceStats::attribute_prior(const std::string& attribute) const {
  const auto* n = lookup(attribute_counts_, attribute);
  return n && attribute_total_ ? static_cast<double>(*n) / static_cast<double>(attribute_total_) : 0.0;
}

std::vector<std::pair<std::string, double>> CooccurrenceStats::ranked_conditional(
    BuildMode mode, const std::string& anchor) const {
  const auto& table = mode == BuildMode::Attribute ? by_object_ : by_attribute_;
  std::vector<std::pair<std::string, double>> out;
  const auto* row = lookup(table, anchor);
  if (!row) return out;
  std::uint64_t total = 0;
  for (const auto& [w, n] : *row) total += n;
  for (const auto& [w, n] : *row) {
    if (n > 0) out.emplace_back(w, static_cast<double>(n) / static_cast<double>(total));
  }
  return sorted_desc(std::move(out));
}

std::vector<std::pair<std::string, double>> CooccurrenceStats::ranked_prior(BuildMode mode) const {
  std::vector<std::pair<std::string, double>> out;
  if (mode == BuildMode::Attribute) {
    for (const auto& [a, n] : attribute_counts_) out.emplace_back(a, attribute_prior(a));
  } else {
    for (const auto& [o, n] : object_counts_) out.emplace_back(o, object_prior(o));
  }
  return sorted_desc(std::move(out));
}

Json CooccurrenceStats::to_json() const {
  Json pairs = Json::array();
  for (const auto& [o, row] : by_object_)
    for (const auto& [a, n] : row) pairs.push_back({o, a, n});
  return Json{{"pairs", pairs}, {"object_counts", object_counts_}, {"attribute_counts", attribute_counts_}};
}

CooccurrenceStats CooccurrenceStats::from_json(const Json& j) {
  CooccurrenceStats s;
  try {
    for (const auto& p : j.at("pairs")) {
      auto o = p.at(0).get<std::string>();
      auto a = p.at(1).get<std::string>();
      auto n = p.at(2).get<std::uint64_t>();
      s.by_object_[o][a] += n;
      s.by_attribute_[a][o] += n;
    }
    s.object_counts_ = j.at("object_counts").get<std::map<std::string, std::uint64_t>>();
    s.attribute_counts_ = j.at("attribute_counts").get<std::map<std::string, std::uint64_t>>();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("co-occurrence stats: ") + e.what());
  }
  for (const auto& [o, n] : s.object_counts_) s.object_total_ += n;
  for (const auto& [a, n] : s.attribute_counts_) s.attribute_total_ += n;
  return s;
}

// ---------------------------------------------------------------------------
// Instance construction

bool is_eligible(const AnnotatedBox& box, BuildMode mode) {
  return !box.object.empty() && !box.attributes.empty() &&
         (mode == BuildMode::Attribute || mode == BuildMode::Object);
}

std::pair<std::string, std::vector<std::string>> anchor_and_positives(const AnnotatedBox& box,
                                                                      BuildMode mode) {
  if (mode == BuildMode::Attribute) return {box.object, box.attributes};
  return {box.attributes.front(), {box.object}};
}

std::vector<std::string> excluded_words(const SceneGraphRecord& record, std::size_t anchor_box,
                                        BuildMode mode) {
  const auto& anchor = record.boxes.at(anchor_box);
  auto [anchor_word, positives] = anchor_and_positives(anchor, mode);
  std::set<std::string> out(positives.begin(), positives.end());
  for (std::size_t j = 0; j < record.boxes.size(); ++j) {
    if (j == anchor_box) continue;
    const auto& other = record.boxes[j];
    if (mode == BuildMode::Attribute) {
      if (other.object == anchor_word) out.insert(other.attributes.begin(), other.attributes.end());
    } else {
      const auto& attrs = other.attributes;
      if (std::find(attrs.begin(), attrs.end(), anchor_word) != attrs.end()) out.insert(other.object);
    }
  }
  return {out.begin(), out.end()};
}

namespace {

std::uint64_t instance_seed(const BuildConfig& config, const std::string& image_id, std::size_t box) {
  return mix_seed(mix_seed(config.seed, fnv1a(image_id)), box);
}

}  // namespace

BuiltInstance build_instance(const SceneGraphRecord& record, std::size_t anchor_box,
                             const CooccurrenceStats& stats, const BuildConfig& config) {
  if (anchor_box >= record.boxes.size()) {
    throw Error(ErrorKind::Builder, "anchor box index out of range for image " + record.image_id);
  }
  const auto& box = record.boxes[anchor_box];
  if (!is_eligible(box, config.mode)) {
    throw Error(ErrorKind::Builder, "box " + std::to_string(anchor_box) + " of image " +
                                        record.image_id + " has no " +
                                        std::string(to_string(config.mode)) + " annotation");
  }
  auto [anchor, positives] = anchor_and_positives(box, config.mode);
  if (positives.size() >= config.total) {
    throw Error(ErrorKind::Builder, "total " + std::to_string(config.total) + " must exceed " +
                                        std::to_string(positives.size()) + " positives");
  }
  const std::size_t wanted = config.total - positives.size();
  const auto excluded_list = excluded_words(record, anchor_box, config.mode);
  std::set<std::string> blocked(excluded_list.begin(), excluded_list.end());
  blocked.insert(anchor);

  BuiltInstance built;
  auto take = [&](const std::vector<std::pair<std::string, double>>& ranked, NegativeSource source) {
    for (const auto& [word, p] : ranked) {
      if (built.negatives.size() == wanted) return;
      if (!blocked.insert(word).second) continue;
      built.negatives.push_back({word, source, p});
    }
  };
  take(stats.ranked_conditional(config.mode, anchor), NegativeSource::Conditional);
  take(stats.ranked_prior(config.mode), NegativeSource::Prior);
  if (built.negatives.size() < wanted) {
    throw Error(ErrorKind::Builder, "vocabulary exhausted for image " + record.image_id + " box " +
                                        std::to_string(anchor_box) + ": need " +
                                        std::to_string(wanted) + " negatives, found " +
                                        std::to_string(built.negatives.size()) + " (shortfall " +
                                        std::to_string(wanted - built.negatives.size()) + ")");
  }

  // Shuffle candidate slots so a candidate's index carries no label signal.
  std::vector<std::pair<std::string, bool>> pool;
  for (const auto& p : positives) pool.emplace_back(p, true);
  for (const auto& n : built.negatives) pool.emplace_back(n.word, false);
  Rng rng(instance_seed(config, record.image_id, anchor_box));
  rng.shuffle(pool);

  auto& inst = built.instance;
  inst.image_id = record.image_id;
  inst.region = box.box;
  inst.anchor_kind = config.mode == BuildMode::Attribute ? AnchorKind::Object : AnchorKind::Attribute;
  inst.anchor = anchor;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    inst.candidates.push_back(pool[i].first);
    if (pool[i].second) inst.positives.push_back(i);
  }
  inst.validate();
  return built;
}

Json SplitManifest::to_json() const {
  return Json{{"mode", std::string(to_string(mode))},
              {"total", total},
              {"seed", seed},
              {"counts",
               {{"records", records},
                {"boxes", boxes},
                {"eligible", eligible},
                {"emitted", emitted},
                {"shortfall", shortfall}}},
              {"config_hash", config_hash}};
}

SplitResult build_split(const std::vector<SceneGraphRecord>& records, const CooccurrenceStats& stats,
                        const BuildConfig& config, std::size_t parallelism) {
  SplitResult result;
  auto& m = result.manifest;
  m.mode = config.mode;
  m.total = config.total;
  m.seed = config.seed;
  m.records = records.size();

  const Json canonical{{"mode", std::string(to_string(config.mode))},
                       {"total", config.total},
                       {"seed", config.seed}};
  std::ostringstream hex;
  hex << std::hex << fnv1a(canonical.dump());
  m.config_hash = hex.str();

  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t r = 0; r < records.size(); ++r) {
    m.boxes += records[r].boxes.size();
    for (std::size_t b = 0; b < records[r].boxes.size(); ++b) {
      if (is_eligible(records[r].boxes[b], config.mode)) jobs.emplace_back(r, b);
    }
  }
  m.eligible = jobs.size();

  std::vector<std::optional<RankingInstance>> slots(jobs.size());
  std::vector<std::exception_ptr> failures(jobs.size());
  parallel_for(jobs.size(), parallelism, [&](std::size_t i) {
    try {
      slots[i] = build_instance(records[jobs[i].first], jobs[i].second, stats, config).instance;
    } catch (const Error& e) {
      // Shortfalls are counted in the manifest; anything else is fatal.
      if (e.kind() != ErrorKind::Builder) failures[i] = std::current_exception();
    } catch (...) {
      failures[i] = std::current_exception();
    }
  });
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  for (auto& s : slots) {
    if (s) {
      result.instances.push_back(std::move(*s));
    } else {
      ++m.shortfall;
    }
  }
  m.emitted = result.instances.size();
  return result;
}

// ---------------------------------------------------------------------------
// Audit

std::vector<std::string> audit_instance(const BuiltInstance& built, const SceneGraphRecord& record,
                                        std::size_t anchor_box, const CooccurrenceStats& stats,
                                        const BuildConfig& config) {
  std::vector<std::string> problems;
  const auto& inst = built.instance;
  const auto& box = record.boxes.at(anchor_box);
  const bool attr_mode = config.mode == BuildMode::Attribute;
  const std::string anchor = attr_mode ? box.object : box.attributes.front();

  if (inst.candidates.size() != config.total) {
    problems.push_back("expected " + std::to_string(config.total) + " candidates, got " +
                       std::to_string(inst.candidates.size()));
  }
  std::set<std::string> uniq(inst.candidates.begin(), inst.candidates.end());
  if (uniq.size() != inst.candidates.size()) problems.push_back("duplicate candidates");

  // On-image exclusion recomputed from the raw record.
  for (std::size_t i = 0; i < inst.candidates.size(); ++i) {
    if (inst.is_positive(i)) continue;
    const auto& word = inst.candidates[i];
    for (std::size_t j = 0; j < record.boxes.size(); ++j) {
      const auto& b = record.boxes[j];
      const bool has_attr = std::find(b.attributes.begin(), b.attributes.end(),
                                      attr_mode ? word : anchor) != b.attributes.end();
      const bool true_pair = attr_mode ? (b.object == anchor && has_attr) : (b.object == word && has_attr);
      if (true_pair) {
        problems.push_back("negative '" + word + "' is a true pairing on box " + std::to_string(j));
      }
    }
  }
  for (auto p : inst.positives) {
    const auto& word = inst.candidates[p];
    const bool ok = attr_mode ? std::find(box.attributes.begin(), box.attributes.end(), word) !=
                                    box.attributes.end()
                              : word == box.object;
    if (!ok) problems.push_back("positive '" + word + "' is not ground truth");
  }

  // Conditional region must be non-increasing and precede the prior region.
  bool in_prior = false;
  double last = 2.0;
  for (const auto& n : built.negatives) {
    if (n.source == NegativeSource::Prior) {
      in_prior = true;
      continue;
    }
    if (in_prior) problems.push_back("conditional negative '" + n.word + "' after prior fallback");
    const double p = attr_mode ? stats.p_attribute_given_object(n.word, anchor)
                               : stats.p_object_given_attribute(n.word, anchor);
    if (p <= 0) problems.push_back("conditional negative '" + n.word + "' has zero probability");
    if (p > last) problems.push_back("conditional order increases at '" + n.word + "'");
    last = p;
  }
  return problems;
}

}  // namespace genret
