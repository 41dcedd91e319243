#include "genret/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string_view>

#include "genret/error.hpp"
#include "genret/random.hpp"

namespace genret {

namespace {

constexpr std::array<std::string_view, 40> kObjectWords = {
    "cat",    "dog",    "car",    "shirt",  "table",  "chair", "tree",   "flower", "bag",    "cup",
    "bus",    "bench",  "horse",  "bird",   "plate",  "lamp",  "door",   "window", "sign",   "fence",
    "boat",   "kite",   "umbrella", "truck", "book",  "clock", "pillow", "bottle", "jacket", "hat",
    "phone",  "sofa",   "bowl",   "train",  "bike",   "vase",  "sheep",  "cow",    "wall",   "floor"};

constexpr std::array<std::string_view, 96> kAttributeWords = {
    "red",      "orange",   "yellow",   "green",    "blue",     "purple",   "pink",     "brown",
    "black",    "white",    "gray",     "silver",   "golden",   "beige",    "wooden",   "metal",
    "plastic",  "glass",    "leather",  "cotton",   "ceramic",  "stone",    "paper",    "concrete",
    "round",    "square",   "long",     "short",    "tall",     "flat",     "curved",   "pointed",
    "large",    "small",    "tiny",     "huge",     "thin",     "thick",    "wide",     "narrow",
    "fluffy",   "furry",    "shiny",    "smooth",   "rough",    "striped",  "spotted",  "checkered",
    "wet",      "dry",      "dirty",    "clean",    "old",      "new",      "broken",   "empty",
    "open",     "closed",   "sitting",  "standing", "walking",  "running",  "parked",   "hanging",
    "bright",   "dark",     "colorful", "plaid",    "floral",   "patterned", "soft",    "hard",
    "folded",   "stacked",  "lit",      "painted",  "rusty",    "cracked",  "sliced",   "ripe",
    "cute",     "sleeping", "flying",   "moving",   "light",    "heavy",    "crowded",  "quiet",
    "warm",     "cold",     "wrinkled", "torn",     "graffitied", "glossy", "matte",    "fuzzy"};

std::string word_at(std::size_t i, bool object) {
  if (object) {
    return i < kObjectWords.size() ? std::string(kObjectWords[i]) : "object" + std::to_string(i);
  }
  return i < kAttributeWords.size() ? std::string(kAttributeWords[i]) : "attr" + std::to_string(i);
}

}  // namespace

void WorldSpec::validate() const {
  if (objects.empty()) throw Error(ErrorKind::Spec, "world has no objects");
  for (const auto& [key, p] : attribute_prior) {
    const auto& [object, attribute] = key;
    if (!(p > 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::Spec, "prior of (" + object + ", " + attribute + ") outside (0, 1]");
    }
    auto it = compatibility.find(object);
    if (it == compatibility.end() || !it->second.count(attribute)) {
      throw Error(ErrorKind::Spec, "(" + object + ", " + attribute + ") has a prior but is not compatible");
    }
  }
}

double WorldSpec::prior(const std::string& object, const std::string& attribute) const {
  auto it = attribute_prior.find({object, attribute});
  return it == attribute_prior.end() ? 0.0 : it->second;
}

std::vector<std::string> WorldSpec::vocabulary() const {
  std::set<std::string> vocab{"is"};
  for (const auto& o : objects)
    for (auto& t : split_words(o)) vocab.insert(std::move(t));
  for (const auto& a : attributes)
    for (auto& t : split_words(a)) vocab.insert(std::move(t));
  return {vocab.begin(), vocab.end()};
}

WorldSpec make_world(std::uint64_t seed, const WorldShape& shape) {
  if (shape.objects == 0 || shape.min_attributes_per_object > shape.max_attributes_per_object ||
      shape.max_attributes_per_object > shape.attributes || !(shape.min_prior > 0) ||
      shape.min_prior > shape.max_prior || shape.max_prior > 1.0) {
    throw Error(ErrorKind::Spec, "inconsistent world shape");
  }
  WorldSpec spec;
  spec.rng_seed = seed;
  for (std::size_t i = 0; i < shape.objects; ++i) spec.objects.push_back(word_at(i, true));
  for (std::size_t i = 0; i < shape.attributes; ++i) spec.attributes.push_back(word_at(i, false));

  Rng rng(mix_seed(seed, 0x77071dULL));
  std::vector<std::size_t> sizes(shape.objects);
  std::size_t capacity = 0;
  for (auto& s : sizes) {
    s = shape.min_attributes_per_object +
        rng.below(shape.max_attributes_per_object - shape.min_attributes_per_object + 1);
    capacity += s;
  }
  // Grow sizes round-robin until every attribute can be placed somewhere.
  for (std::size_t i = 0; capacity < shape.attributes; i = (i + 1) % sizes.size()) {
    if (sizes[i] < shape.max_attributes_per_object) {
      ++sizes[i];
      ++capacity;
    } else if (std::all_of(sizes.begin(), sizes.end(),
                           [&](std::size_t s) { return s == shape.max_attributes_per_object; })) {
      break;
    }
  }

  std::vector<std::string> order = spec.attributes;
  rng.shuffle(order);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < shape.objects; ++i) {
    auto& compat = spec.compatibility[spec.objects[i]];
    while (compat.size() < sizes[i]) {
      if (cursor < order.size()) {
        compat.insert(order[cursor++]);
      } else {
        compat.insert(spec.attributes[rng.below(spec.attributes.size())]);
      }
    }
  }
  for (const auto& [object, compat] : spec.compatibility) {
    for (const auto& a : compat) spec.attribute_prior[{object, a}] = rng.uniform(shape.min_prior, shape.max_prior);
  }
  spec.validate();
  return spec;
}

void to_json(Json& j, const WorldSpec& spec) {
  Json compat = Json::object();
  for (const auto& [o, attrs] : spec.compatibility) compat[o] = std::vector<std::string>(attrs.begin(), attrs.end());
  Json priors = Json::array();
  for (const auto& [key, p] : spec.attribute_prior) priors.push_back({{"object", key.first}, {"attribute", key.second}, {"p", p}});
  j = Json{{"objects", spec.objects},
           {"attributes", spec.attributes},
           {"compatibility", compat},
           {"attribute_prior", priors},
           {"rng_seed", spec.rng_seed}};
}

void from_json(const Json& j, WorldSpec& spec) {
  try {
    spec = WorldSpec{};
    for (const auto& o : j.at("objects")) spec.objects.push_back(normalize_word(o.get<std::string>()));
    for (const auto& a : j.at("attributes")) spec.attributes.push_back(normalize_word(a.get<std::string>()));
    for (const auto& [o, attrs] : j.at("compatibility").items()) {
      auto& set = spec.compatibility[normalize_word(o)];
      for (const auto& a : attrs) set.insert(normalize_word(a.get<std::string>()));
    }
    for (const auto& e : j.at("attribute_prior")) {
      spec.attribute_prior[{normalize_word(e.at("object").get<std::string>()),
                            normalize_word(e.at("attribute").get<std::string>())}] = e.at("p").get<double>();
    }
    spec.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("world spec: ") + e.what());
  }
  spec.validate();
}

void SyntheticScene::validate(const WorldSpec& spec) const {
  if (entities.empty()) throw Error(ErrorKind::Spec, "scene " + scene_id + " has no entities");
  for (const auto& e : entities) {
    auto it = spec.compatibility.find(e.object);
    for (const auto& a : e.attributes) {
      if (it == spec.compatibility.end() || !it->second.count(a)) {
        throw Error(ErrorKind::Spec, "scene " + scene_id + ": '" + a + "' not compatible with '" + e.object + "'");
      }
    }
  }
}

SyntheticScene SyntheticScene::crop(const std::optional<Box>& region) const {
  if (!region) return *this;
  SyntheticScene out{scene_id, {}};
  for (const auto& e : entities) {
    if (e.box.intersects(*region)) out.entities.push_back(e);
  }
  return out;
}

void to_json(Json& j, const SyntheticScene& scene) {
  Json entities = Json::array();
  for (const auto& e : scene.entities) {
    entities.push_back({{"object", e.object}, {"attributes", e.attributes}, {"box", e.box}});
  }
  j = Json{{"scene_id", scene.scene_id}, {"entities", entities}};
}

void from_json(const Json& j, SyntheticScene& scene) {
  try {
    scene.scene_id = id_from_json(j.at("scene_id"));
    scene.entities.clear();
    for (const auto& e : j.at("entities")) {
      Entity ent;
      ent.object = normalize_word(e.at("object").get<std::string>());
      std::set<std::string> attrs;
      for (const auto& a : e.at("attributes")) attrs.insert(normalize_word(a.get<std::string>()));
      ent.attributes.assign(attrs.begin(), attrs.end());
      ent.box = e.at("box").get<Box>();
      scene.entities.push_back(std::move(ent));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("scene: ") + e.what());
  }
}

SyntheticScene sample_scene(const WorldSpec& spec, std::size_t n_entities, std::uint64_t ordinal) {
  if (spec.objects.empty()) throw Error(ErrorKind::Spec, "world has no objects");
  if (n_entities == 0) throw Error(ErrorKind::Argument, "a scene needs at least one entity");
  Rng rng(mix_seed(spec.rng_seed, ordinal));
  SyntheticScene scene;
  scene.scene_id = "scene-" + std::to_string(ordinal);
  for (std::size_t i = 0; i < n_entities; ++i) {
    Entity e;
    e.object = spec.objects[rng.below(spec.objects.size())];
    auto it = spec.compatibility.find(e.object);
    if (it != spec.compatibility.end()) {
      for (const auto& a : it->second) {
        if (rng.bernoulli(spec.prior(e.object, a))) e.attributes.push_back(a);
      }
    }
    // Overlapping layout: every crop around one entity also shows the others.
    const double k = static_cast<double>(i);
    e.box = Box{40.0 * k, 30.0 * k, 400.0, 300.0};
    scene.entities.push_back(std::move(e));
  }
  return scene;
}

SceneSampler::SceneSampler(WorldSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

SyntheticScene SceneSampler::sample(std::size_t n_entities) {
  return sample_scene(spec_, n_entities, ordinal_++);
}

SyntheticScene SceneSampler::sample_upto(std::size_t max_entities) {
  if (max_entities == 0) throw Error(ErrorKind::Argument, "max_entities must be positive");
  Rng rng(mix_seed(spec_.rng_seed ^ 0x5ca1ab1eULL, ordinal_));
  return sample(1 + rng.below(max_entities));
}

std::vector<Caption> caption_process(const SyntheticScene& scene) {
  std::map<TokenSeq, double> mass;
  if (scene.entities.empty()) return {};
  const double entity_p = 1.0 / static_cast<double>(scene.entities.size());
  static const Template kAttrObject = Template::parse("{A} {O}");
  static const Template kObjectIsAttr = Template::parse("{O} is {A}");
  static const Template kObjectOnly = Template::parse("{O}");
  for (const auto& e : scene.entities) {
    if (e.attributes.empty()) {
      mass[kObjectOnly.render(std::nullopt, e.object)] += entity_p;
      continue;
    }
    const double p = entity_p * 0.5 / static_cast<double>(e.attributes.size());
    for (const auto& a : e.attributes) {
      mass[kAttrObject.render(a, e.object)] += p;
      mass[kObjectIsAttr.render(a, e.object)] += p;
    }
  }
  std::vector<Caption> out;
  out.reserve(mass.size());
  for (auto& [tokens, p] : mass) out.push_back({tokens, p});
  return out;
}

SceneGraphRecord to_scene_graph(const SyntheticScene& scene) {
  SceneGraphRecord rec;
  rec.image_id = scene.scene_id;
  for (std::size_t i = 0; i < scene.entities.size(); ++i) {
    const auto& e = scene.entities[i];
    rec.boxes.push_back({scene.scene_id + "/" + std::to_string(i), e.box, e.object, e.attributes});
  }
  return rec;
}

std::vector<RankingInstance> make_instances(const SyntheticScene& scene, std::size_t n_candidates,
                                            AnchorKind anchor_kind, const CooccurrenceStats& stats,
                                            std::uint64_t seed) {
  const auto record = to_scene_graph(scene);
  const BuildConfig config{anchor_kind == AnchorKind::Object ? BuildMode::Attribute : BuildMode::Object,
                           n_candidates, seed};
  std::vector<RankingInstance> out;
  for (std::size_t i = 0; i < record.boxes.size(); ++i) {
    if (!is_eligible(record.boxes[i], config.mode)) continue;
    out.push_back(build_instance(record, i, stats, config).instance);
  }
  return out;
}

}  // namespace genret
