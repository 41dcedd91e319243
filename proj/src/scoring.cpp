#include "genret/scoring.hpp"

#include <cmath>

#include "genret/parallel.hpp"

namespace genret {

GenerativeLoss generative_loss(const ScorerBackend& backend, const ImageRef& image,
                               const TokenSeq& sentence) {
  if (sentence.empty()) throw Error(ErrorKind::Argument, "cannot score an empty sentence");
  const auto caps = backend.capabilities();
  if (!caps.has_generative) throw Error(ErrorKind::Configuration, "backend cannot score generatively");
  if (auto recorded = backend.recorded_score(image, sentence, Method::Generative)) {
    return {recorded->loss, std::move(recorded->per_token)};
  }

  std::vector<TokenSeq> prefixes;
  prefixes.reserve(sentence.size() + 1);
  for (std::size_t i = 0; i < sentence.size(); ++i) prefixes.emplace_back(sentence.begin(), sentence.begin() + i);
  if (caps.has_terminal_token) prefixes.push_back(sentence);

  const auto dists = backend.next_token_distributions(image, prefixes);
  if (dists.size() != prefixes.size()) {
    throw Error(ErrorKind::Configuration, "backend answered " + std::to_string(dists.size()) + " of " +
                                              std::to_string(prefixes.size()) + " prefix queries");
  }

  GenerativeLoss loss;
  loss.per_token.reserve(dists.size());
  const std::string context = "image " + image.image_id + ", sentence '" + join_words(sentence) + "'";
  for (std::size_t i = 0; i < dists.size(); ++i) {
    dists[i].check_normalized(context);
    double p;
    if (i < sentence.size()) {
      auto it = dists[i].probs.find(sentence[i]);
      if (it == dists[i].probs.end()) {
        throw Error(ErrorKind::Vocabulary, "token '" + sentence[i] + "' is not in the backend vocabulary");
      }
      p = it->second;
    } else {
      if (!dists[i].terminal_p) {
        throw Error(ErrorKind::Normalization, context + ": backend declares a terminal token but sent none");
      }
      p = *dists[i].terminal_p;
    }
    // p may exceed 1 by rounding; clamp so every term stays non-negative.
    loss.per_token.push_back(p >= 1.0 ? 0.0 : -std::log(p));
  }
  for (double t : loss.per_token) loss.value += t;
  return loss;
}

ContrastiveLoss contrastive_loss(const ScorerBackend& backend, const ImageRef& image,
                                 const TokenSeq& sentence) {
  if (sentence.empty()) throw Error(ErrorKind::Argument, "cannot score an empty sentence");
  if (!backend.capabilities().has_contrastive) {
    throw Error(ErrorKind::Configuration, "backend cannot score contrastively");
  }
  if (auto recorded = backend.recorded_score(image, sentence, Method::Contrastive)) {
    return {recorded->loss};
  }
  const auto f = backend.embed_image(image);
  const auto g = backend.embed_text(sentence);
  if (f.size() != g.size()) {
    throw Error(ErrorKind::Configuration, "embedding sizes differ: " + std::to_string(f.size()) + " vs " +
                                              std::to_string(g.size()));
  }
  for (const auto* v : {&f, &g}) {
    const double norm = l2_norm(*v);
    if (std::abs(norm - 1.0) > kNormalizationTolerance) {
      throw Error(ErrorKind::Normalization, "embedding norm " + std::to_string(norm) + " is not 1");
    }
  }
  double sum = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = f[i] - g[i];
    sum += d * d;
  }
  return {std::sqrt(sum)};
}

TokenSeq candidate_sentence(const RankingInstance& instance, const Template& tmpl, std::size_t candidate) {
  const auto& word = instance.candidates.at(candidate);
  if (instance.anchor_kind == AnchorKind::Object) return tmpl.render(word, instance.anchor);
  return tmpl.render(instance.anchor, word);
}

ScoredInstance rank_instance(const ScorerBackend& backend, const RankingInstance& instance,
                             const Template& tmpl, Method method, const ScoringOptions& options) {
  instance.validate();
  const Slot ranked = ranked_slot(instance.anchor_kind);
  if (!tmpl.has_slot(ranked)) {
    throw Error(ErrorKind::Configuration, "template '" + tmpl.format() + "' has no " +
                                              (ranked == Slot::Attribute ? "{A}" : "{O}") +
                                              " slot for " + std::string(to_string(instance.anchor_kind)) +
                                              "-anchored instances");
  }
  ScoredInstance out;
  out.instance = instance;
  out.method = method;
  out.template_name = tmpl.name();
  const std::size_t n = instance.candidates.size();
  out.scores.reserve(n);
  out.sentences.reserve(n);
  out.raw_losses.reserve(n);
  out.per_token.reserve(n);
  const auto image = instance.image();
  for (std::size_t i = 0; i < n; ++i) {
    auto sentence = candidate_sentence(instance, tmpl, i);
    if (method == Method::Generative) {
      auto loss = generative_loss(backend, image, sentence);
      const double score = options.length_normalize
                               ? loss.value / static_cast<double>(sentence.size())
                               : loss.value;
      out.scores.push_back(score);
      out.raw_losses.push_back(loss.value);
      out.per_token.push_back(std::move(loss.per_token));
    } else {
      const double d = contrastive_loss(backend, image, sentence).value;
      out.scores.push_back(d);
      out.raw_losses.push_back(d);
      out.per_token.emplace_back();
    }
    out.sentences.push_back(std::move(sentence));
  }
  out.validate();
  return out;
}

std::vector<RankOutcome> batch_rank(const ScorerBackend& backend,
                                    const std::vector<RankingInstance>& instances, const Template& tmpl,
                                    Method method, std::size_t parallelism, const ScoringOptions& options) {
  std::optional<SerializedBackend> gate;
  const ScorerBackend* target = &backend;
  if (!backend.capabilities().concurrent_safe && parallelism > 1) {
    gate.emplace(backend);
    target = &*gate;
  }
  std::vector<RankOutcome> out(instances.size());
  parallel_for(instances.size(), parallelism, [&](std::size_t i) {
    const auto where = instances[i].image_id + "/" + instances[i].anchor + ": ";
    try {
      out[i].scored = rank_instance(*target, instances[i], tmpl, method, options);
    } catch (const Error& e) {
      out[i].error_kind = e.kind();
      out[i].error = where + e.what();
    } catch (const std::exception& e) {
      out[i].error = where + e.what();
    }
  });
  return out;
}

void to_json(Json& j, const ScoreRecord& r) {
  j = Json{{"image_id", r.image_id},
           {"region", region_to_json(r.region)},
           {"template_name", r.template_name},
           {"method", std::string(to_string(r.method))},
           {"candidate", r.candidate},
           {"sentence", r.sentence},
           {"loss", r.loss},
           {"per_token", r.per_token}};
}

void from_json(const Json& j, ScoreRecord& r) {
  try {
    r.image_id = id_from_json(j.at("image_id"));
    r.region = j.contains("region") ? region_from_json(j.at("region")) : std::nullopt;
    r.template_name = j.at("template_name").get<std::string>();
    r.method = method_from_string(j.at("method").get<std::string>());
    r.candidate = j.at("candidate").get<std::string>();
    r.sentence = j.at("sentence").get<TokenSeq>();
    r.loss = j.at("loss").get<double>();
    r.per_token = j.value("per_token", std::vector<double>{});
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("score record: ") + e.what());
  }
}

std::vector<ScoreRecord> cache_records(const ScoredInstance& scored) {
  const auto& inst = scored.instance;
  const std::size_t n = inst.candidates.size();
  if (scored.sentences.size() != n || scored.raw_losses.size() != n || scored.per_token.size() != n) {
    throw Error(ErrorKind::Schema, "scored instance lacks per-candidate provenance");
  }
  std::vector<ScoreRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({inst.image_id, inst.region, scored.template_name, scored.method, inst.candidates[i],
                   scored.sentences[i], scored.raw_losses[i], scored.per_token[i]});
  }
  return out;
}

std::vector<ScoreRecord> read_score_cache(const std::filesystem::path& path) {
  std::vector<ScoreRecord> out;
  for (const auto& row : io::read_jsonl(path)) out.push_back(row.get<ScoreRecord>());
  return out;
}

void write_score_cache(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
  std::vector<Json> rows(records.begin(), records.end());
  io::write_text_atomic(path, io::to_jsonl(rows));
}

}  // namespace genret
