#pragma once

// Generative and contrastive retrieval losses, per-instance rankings and the
// score-cache record format.

#include <optional>
#include <string>
#include <vector>

#include "genret/backend.hpp"
#include "genret/error.hpp"
#include "genret/io.hpp"
#include "genret/types.hpp"

namespace genret {

// Cross-entropy of a sentence under an image-conditioned next-token model, in
// nats. per_token[i] = -log q(t_i | image, t_0..t_{i-1}); a terminal term is
// appended when the backend declares one. value is their sum.
struct GenerativeLoss {
  double value = 0;
  std::vector<double> per_token;
};

// ||f(image) - g(text)||_2 for unit-norm embeddings, hence in [0, 2].
struct ContrastiveLoss {
  double value = 0;
};

struct ScoringOptions {
  // Divide generative losses by token count. Off by default: raw sums favour
  // shorter sentences, which is harmless when candidates have similar lengths.
  bool length_normalize = false;
};

GenerativeLoss generative_loss(const ScorerBackend& backend, const ImageRef& image,
                               const TokenSeq& sentence);

ContrastiveLoss contrastive_loss(const ScorerBackend& backend, const ImageRef& image,
                                 const TokenSeq& sentence);

// The sentence scored for candidate i: the candidate fills the template's
// ranked slot and the anchor the other one.
TokenSeq candidate_sentence(const RankingInstance& instance, const Template& tmpl, std::size_t candidate);

// Scores every candidate; throws Error(Configuration) when the template lacks
// the slot ranked for the instance's anchor kind.
ScoredInstance rank_instance(const ScorerBackend& backend, const RankingInstance& instance,
                             const Template& tmpl, Method method, const ScoringOptions& options = {});

struct RankOutcome {
  std::optional<ScoredInstance> scored;
  std::optional<ErrorKind> error_kind;
  std::string error;

  bool ok() const noexcept { return scored.has_value(); }
};

// Results in input order and identical to sequential execution for any
// parallelism. Per-instance failures are recorded and the batch continues.
// Backends that are not concurrent-safe are serialized behind a mutex.
std::vector<RankOutcome> batch_rank(const ScorerBackend& backend,
                                    const std::vector<RankingInstance>& instances, const Template& tmpl,
                                    Method method, std::size_t parallelism,
                                    const ScoringOptions& options = {});

// One cache line per scored candidate.
struct ScoreRecord {
  std::string image_id;
  std::optional<Box> region;
  std::string template_name;
  Method method = Method::Generative;
  std::string candidate;
  TokenSeq sentence;
  double loss = 0;
  std::vector<double> per_token;  // empty for contrastive scores
};

void to_json(Json& j, const ScoreRecord& record);
void from_json(const Json& j, ScoreRecord& record);

std::vector<ScoreRecord> cache_records(const ScoredInstance& scored);
std::vector<ScoreRecord> read_score_cache(const std::filesystem::path& path);
void write_score_cache(const std::filesystem::path& path, const std::vector<ScoreRecord>& records);

}  // namespace genret
