#include "genret/backend.hpp"

#include <cmath>

#include "genret/error.hpp"

namespace genret {

double TokenDistribution::total() const {
  double sum = 0;
  for (const auto& [token, p] : probs) sum += p;
  if (terminal_p) sum += *terminal_p;
  return sum;
}

void TokenDistribution::check_normalized(std::string_view context) const {
  for (const auto& [token, p] : probs) {
    if (!(p >= 0) || !std::isfinite(p)) {
      throw Error(ErrorKind::Normalization, std::string(context) + ": invalid probability for '" +
                                                token + "'");
    }
  }
  if (terminal_p && (!(*terminal_p >= 0) || !std::isfinite(*terminal_p))) {
    throw Error(ErrorKind::Normalization, std::string(context) + ": invalid terminal probability");
  }
  const double sum = total();
  if (std::abs(sum - 1.0) > kNormalizationTolerance) {
    throw Error(ErrorKind::Normalization,
                std::string(context) + ": distribution sums to " + std::to_string(sum));
  }
}

TokenDistribution ScorerBackend::next_token_distribution(const ImageRef&, const TokenSeq&) const {
  throw Error(ErrorKind::Configuration, "backend has no generative capability");
}

std::vector<TokenDistribution> ScorerBackend::next_token_distributions(
    const ImageRef& image, std::span<const TokenSeq> prefixes) const {
  std::vector<TokenDistribution> out;
  out.reserve(prefixes.size());
  for (const auto& p : prefixes) out.push_back(next_token_distribution(image, p));
  return out;
}

std::vector<double> ScorerBackend::embed_image(const ImageRef&) const {
  throw Error(ErrorKind::Configuration, "backend has no contrastive capability");
}

std::vector<double> ScorerBackend::embed_text(const TokenSeq&) const {
  throw Error(ErrorKind::Configuration, "backend has no contrastive capability");
}

Capabilities SerializedBackend::capabilities() const {
  auto caps = inner_.capabilities();
  caps.concurrent_safe = true;
  return caps;
}

std::vector<std::string> SerializedBackend::vocabulary() const {
  std::lock_guard lock(mutex_);
  return inner_.vocabulary();
}

TokenDistribution SerializedBackend::next_token_distribution(const ImageRef& image,
                                                             const TokenSeq& prefix) const {
  std::lock_guard lock(mutex_);
  return inner_.next_token_distribution(image, prefix);
}

std::vector<TokenDistribution> SerializedBackend::next_token_distributions(
    const ImageRef& image, std::span<const TokenSeq> prefixes) const {
  std::lock_guard lock(mutex_);
  return inner_.next_token_distributions(image, prefixes);
}

std::vector<double> SerializedBackend::embed_image(const ImageRef& image) const {
  std::lock_guard lock(mutex_);
  return inner_.embed_image(image);
}

std::vector<double> SerializedBackend::embed_text(const TokenSeq& sentence) const {
  std::lock_guard lock(mutex_);
  return inner_.embed_text(sentence);
}

std::optional<RecordedScore> SerializedBackend::recorded_score(const ImageRef& image,
                                                               const TokenSeq& sentence,
                                                               Method method) const {
  std::lock_guard lock(mutex_);
  return inner_.recorded_score(image, sentence, method);
}

double l2_norm(std::span<const double> v) {
  double sum = 0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

}  // namespace genret
