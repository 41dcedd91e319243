#pragma once

// Reproducible synthetic scenes with an exactly enumerable caption process.
// Scenes stand in for images: the oracle backend resolves an image id to a
// scene and derives next-token probabilities from its caption distribution.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "genret/io.hpp"
#include "genret/types.hpp"
#include "genret/vgarank.hpp"

namespace genret {

struct WorldSpec {
  std::vector<std::string> objects;
  std::vector<std::string> attributes;
  std::map<std::string, std::set<std::string>> compatibility;
  std::map<std::pair<std::string, std::string>, double> attribute_prior;  // (object, attribute)
  std::uint64_t rng_seed = 0;

  // Throws Error(Spec) on an empty object list, a positive prior outside
  // compatibility, or a prior outside (0, 1].
  void validate() const;

  double prior(const std::string& object, const std::string& attribute) const;

  // Sorted tokens of every object and attribute word plus the "is" literal.
  std::vector<std::string> vocabulary() const;
};

struct WorldShape {
  std::size_t objects = 20;
  std::size_t attributes = 64;
  std::size_t min_attributes_per_object = 3;
  std::size_t max_attributes_per_object = 5;
  double min_prior = 0.15;
  double max_prior = 0.6;
};

// A world drawn from built-in object/attribute word lists. Every attribute is
// compatible with at least one object.
WorldSpec make_world(std::uint64_t seed, const WorldShape& shape = {});

void to_json(Json& j, const WorldSpec& spec);
void from_json(const Json& j, WorldSpec& spec);

struct Entity {
  std::string object;
  std::vector<std::string> attributes;  // sorted, unique
  Box box;
};

struct SyntheticScene {
  std::string scene_id;
  std::vector<Entity> entities;

  void validate(const WorldSpec& spec) const;

  // Entities whose boxes intersect the region; the whole scene for nullopt.
  SyntheticScene crop(const std::optional<Box>& region) const;
};

void to_json(Json& j, const SyntheticScene& scene);
void from_json(const Json& j, SyntheticScene& scene);

// Deterministic in (spec.rng_seed, ordinal). Objects are drawn uniformly and
// each compatible attribute independently with its prior.
SyntheticScene sample_scene(const WorldSpec& spec, std::size_t n_entities, std::uint64_t ordinal);

// Stateful convenience over sample_scene with an advancing ordinal.
class SceneSampler {
 public:
  explicit SceneSampler(WorldSpec spec);
  SyntheticScene sample(std::size_t n_entities);
  // Entity count drawn uniformly from [1, max_entities].
  SyntheticScene sample_upto(std::size_t max_entities);
  std::uint64_t ordinal() const noexcept { return ordinal_; }

 private:
  WorldSpec spec_;
  std::uint64_t ordinal_ = 0;
};

struct Caption {
  TokenSeq tokens;
  double probability;
};

// The exact caption distribution: pick an entity uniformly, a template
// uniformly from {"{A} {O}", "{O} is {A}"}, one of the entity's attributes
// uniformly, and emit the rendering. Attribute-less entities emit "{O}".
// Identical captions are merged; output is sorted by token sequence.
std::vector<Caption> caption_process(const SyntheticScene& scene);

SceneGraphRecord to_scene_graph(const SyntheticScene& scene);

// Ranking problems for every eligible entity of the scene, built with the
// dataset-builder policy (hard negatives from `stats`, on-image exclusion,
// prior fallback). Throws Error(Builder) if the vocabulary is too small.
std::vector<RankingInstance> make_instances(const SyntheticScene& scene, std::size_t n_candidates,
                                            AnchorKind anchor_kind, const CooccurrenceStats& stats,
                                            std::uint64_t seed);

}  // namespace genret
