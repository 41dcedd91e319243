#pragma once

// Construction of VGARank-style ranking problems: N ground-truth words for an
// anchor plus (total - N) hard negatives ranked by co-occurrence with the
// anchor, with on-image exclusion and a marginal-prior fallback.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "genret/io.hpp"
#include "genret/types.hpp"

namespace genret {

struct AnnotatedBox {
  std::string object_id;
  Box box;
  std::string object;
  std::vector<std::string> attributes;
};

struct SceneGraphRecord {
  std::string image_id;
  std::vector<AnnotatedBox> boxes;
};

// Reads the documented subset of Visual Genome's objects+attributes export:
// either a list of images or a single image object, each with image_id and
// objects[{object_id, x, y, w, h, names, attributes}]. Only the first name of
// a multi-name object is kept; words are normalized; boxes without a name are
// dropped.
std::vector<SceneGraphRecord> parse_scene_graphs(const Json& doc);
Json scene_graphs_to_json(const std::vector<SceneGraphRecord>& records);

// Attribute: rank attributes for an anchor object (VGARank-A).
// Object: rank objects for an anchor attribute (VGARank-O).
enum class BuildMode { Attribute, Object };

std::string_view to_string(BuildMode mode);
BuildMode build_mode_from_string(std::string_view text);

class CooccurrenceStats {
 public:
  // Throws Error(Stats) if no record carries a box.
  static CooccurrenceStats build(const std::vector<SceneGraphRecord>& records);

  void add(const SceneGraphRecord& record);
  void merge(const CooccurrenceStats& other);

  std::uint64_t pair_count(const std::string& object, const std::string& attribute) const;
  double p_attribute_given_object(const std::string& attribute, const std::string& object) const;
  double p_object_given_attribute(const std::string& object, const std::string& attribute) const;
  double object_prior(const std::string& object) const;
  double attribute_prior(const std::string& attribute) const;

  // Candidate-kind words with positive conditional probability given the
  // anchor, by descending probability, ties lexicographic.
  std::vector<std::pair<std::string, double>> ranked_conditional(BuildMode mode,
                                                                 const std::string& anchor) const;
  // Every candidate-kind word by descending marginal prior, ties lexicographic.
  std::vector<std::pair<std::string, double>> ranked_prior(BuildMode mode) const;

  std::size_t object_vocabulary_size() const { return object_counts_.size(); }
  std::size_t attribute_vocabulary_size() const { return attribute_counts_.size(); }

  Json to_json() const;
  static CooccurrenceStats from_json(const Json& j);

 private:
  std::map<std::string, std::map<std::string, std::uint64_t>> by_object_;
  std::map<std::string, std::map<std::string, std::uint64_t>> by_attribute_;
  std::map<std::string, std::uint64_t> object_counts_;
  std::map<std::string, std::uint64_t> attribute_counts_;
  std::uint64_t object_total_ = 0;
  std::uint64_t attribute_total_ = 0;
};

struct BuildConfig {
  BuildMode mode = BuildMode::Attribute;
  std::size_t total = 50;
  std::uint64_t seed = 0;
};

enum class NegativeSource { Conditional, Prior };

struct SelectedNegative {
  std::string word;
  NegativeSource source;
  double score;  // conditional or prior probability used for ordering
};

struct BuiltInstance {
  RankingInstance instance;
  std::vector<SelectedNegative> negatives;  // in selection order, before shuffling
};

// A box is eligible when it has a word of the ranked kind and a word to anchor
// on (always the object in Attribute mode; the first attribute in Object mode).
bool is_eligible(const AnnotatedBox& box, BuildMode mode);

// The anchor word and positive words of a box.
std::pair<std::string, std::vector<std::string>> anchor_and_positives(const AnnotatedBox& box,
                                                                      BuildMode mode);

// Words that may not be negatives: the anchor box's ground truth plus any word
// that forms the same (anchor, word) pairing on another box of the image.
std::vector<std::string> excluded_words(const SceneGraphRecord& record, std::size_t anchor_box,
                                        BuildMode mode);

// Throws Error(Builder) for an ineligible box, N >= total, or when the
// vocabulary runs out before `total` candidates.
BuiltInstance build_instance(const SceneGraphRecord& record, std::size_t anchor_box,
                             const CooccurrenceStats& stats, const BuildConfig& config);

struct SplitManifest {
  BuildMode mode = BuildMode::Attribute;
  std::size_t total = 50;
  std::uint64_t seed = 0;
  std::size_t records = 0;
  std::size_t boxes = 0;
  std::size_t eligible = 0;
  std::size_t emitted = 0;
  std::size_t shortfall = 0;  // eligible boxes skipped because the vocabulary ran out
  std::string config_hash;

  Json to_json() const;
};

struct SplitResult {
  std::vector<RankingInstance> instances;
  SplitManifest manifest;
};

// One instance per eligible (image, box), ordered by record then box index.
SplitResult build_split(const std::vector<SceneGraphRecord>& records, const CooccurrenceStats& stats,
                        const BuildConfig& config, std::size_t parallelism = 1);

// Independent re-check of a built instance; returns one message per violation.
std::vector<std::string> audit_instance(const BuiltInstance& built, const SceneGraphRecord& record,
                                        std::size_t anchor_box, const CooccurrenceStats& stats,
                                        const BuildConfig& config);

}  // namespace genret
