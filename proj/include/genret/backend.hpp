#pragma once

// The scorer-backend interface: image-conditioned next-token distributions
// for generative retrieval and image/text embeddings for the contrastive
// baseline.

#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genret/types.hpp"

namespace genret {

struct Capabilities {
  bool has_generative = false;
  bool has_contrastive = false;
  // When set, distributions carry a terminal (end-of-sentence) probability
  // and generative losses include a final -log p(terminal | sentence) term.
  bool has_terminal_token = false;
  bool concurrent_safe = false;
};

inline constexpr double kNormalizationTolerance = 1e-6;

struct TokenDistribution {
  std::map<std::string, double> probs;
  std::optional<double> terminal_p;

  double total() const;

  // Throws Error(Normalization) when mass is negative or does not sum to
  // 1 within kNormalizationTolerance.
  void check_normalized(std::string_view context) const;
};

// Scores a backend recorded earlier; replaying backends return these instead
// of distributions.
struct RecordedScore {
  double loss = 0;
  std::vector<double> per_token;
};

class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;

  virtual Capabilities capabilities() const = 0;

  // Sorted token set. May be empty for backends that only learn their
  // vocabulary from responses.
  virtual std::vector<std::string> vocabulary() const { return {}; }

  // Distribution over the next token given the image and prefix; the empty
  // prefix means start-of-sentence conditioning.
  virtual TokenDistribution next_token_distribution(const ImageRef& image,
                                                    const TokenSeq& prefix) const;

  // Batched form; the default issues one query per prefix.
  virtual std::vector<TokenDistribution> next_token_distributions(
      const ImageRef& image, std::span<const TokenSeq> prefixes) const;

  virtual std::vector<double> embed_image(const ImageRef& image) const;
  virtual std::vector<double> embed_text(const TokenSeq& sentence) const;

  virtual std::optional<RecordedScore> recorded_score(const ImageRef& image,
                                                      const TokenSeq& sentence,
                                                      Method method) const {
    (void)image, (void)sentence, (void)method;
    return std::nullopt;
  }
};

// Funnels every call of a non-concurrent backend through one mutex.
class SerializedBackend final : public ScorerBackend {
 public:
  explicit SerializedBackend(const ScorerBackend& inner) : inner_(inner) {}

  Capabilities capabilities() const override;
  std::vector<std::string> vocabulary() const override;
  TokenDistribution next_token_distribution(const ImageRef& image,
                                            const TokenSeq& prefix) const override;
  std::vector<TokenDistribution> next_token_distributions(
      const ImageRef& image, std::span<const TokenSeq> prefixes) const override;
  std::vector<double> embed_image(const ImageRef& image) const override;
  std::vector<double> embed_text(const TokenSeq& sentence) const override;
  std::optional<RecordedScore> recorded_score(const ImageRef& image, const TokenSeq& sentence,
                                              Method method) const override;

 private:
  const ScorerBackend& inner_;
  mutable std::mutex mutex_;
};

double l2_norm(std::span<const double> v);

}  // namespace genret
