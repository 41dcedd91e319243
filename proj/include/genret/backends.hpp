#pragma once

// Shipped scorer backends: the exact synthetic oracle, score-cache replay and
// the HTTP wire-protocol client (plus a loopback server for tests).

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "genret/backend.hpp"
#include "genret/scoring.hpp"
#include "genret/world.hpp"

namespace genret {

inline constexpr std::string_view kTerminalToken = "</s>";

struct OracleOptions {
  // Mass spread uniformly over vocabulary + terminal at every step, so
  // captions the scene can never emit still get a finite loss.
  double smoothing = 1e-6;
  bool terminal_token = true;
};

// Derives next-token distributions from a scene's exact caption process:
// p(t | prefix) is the caption mass continuing the prefix with t, divided by
// the mass consistent with the prefix, mixed with the smoothing floor. Images
// are scene ids; a region restricts the scene to the entities it intersects.
class OracleBackend final : public ScorerBackend {
 public:
  OracleBackend(std::vector<std::string> vocabulary, std::vector<SyntheticScene> scenes,
                OracleOptions options = {});
  OracleBackend(const WorldSpec& world, std::vector<SyntheticScene> scenes, OracleOptions options = {});

  Capabilities capabilities() const override;
  std::vector<std::string> vocabulary() const override { return vocabulary_; }
  TokenDistribution next_token_distribution(const ImageRef& image, const TokenSeq& prefix) const override;

  // Bag-of-words embedder: the image vector is the caption-probability
  // weighted token frequency over the scene's captions, the text vector the
  // token-count vector; both L2-normalized over the sorted vocabulary.
  std::vector<double> embed_image(const ImageRef& image) const override;
  std::vector<double> embed_text(const TokenSeq& sentence) const override;

  const SyntheticScene& scene(const std::string& image_id) const;
  std::vector<Caption> captions(const ImageRef& image) const;

 private:
  std::size_t index_of(const std::string& token) const;

  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, std::size_t> token_index_;
  std::map<std::string, SyntheticScene> scenes_;
  std::map<std::string, std::vector<Caption>> full_captions_;
  OracleOptions options_;
};

// Replays a score cache. Lookups are keyed by (image_id, region, method,
// sentence); a miss raises Error(Lookup).
class CachedBackend final : public ScorerBackend {
 public:
  explicit CachedBackend(const std::vector<ScoreRecord>& records);
  static CachedBackend load(const std::filesystem::path& cache_file);

  Capabilities capabilities() const override;
  std::optional<RecordedScore> recorded_score(const ImageRef& image, const TokenSeq& sentence,
                                              Method method) const override;
  TokenDistribution next_token_distribution(const ImageRef& image, const TokenSeq& prefix) const override;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, RecordedScore> entries_;
};

struct RemoteOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8080
  std::chrono::milliseconds timeout{10000};
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{50};
  std::ptrdiff_t max_in_flight = 8;
  bool terminal_token = false;
};

// Client for the JSON-over-HTTP protocol:
//   POST /v1/logprobs {request_id, image_id, region?, queries: [{prefix}]}
//     -> {request_id, results: [{probs: {token: p}, terminal_p?}]}
//   POST /v1/embed {request_id, image_id? | text?, region?} -> {request_id, vector}
// Sentence scoring sends every prefix of a sentence in one request. Failed
// connections and 5xx responses are retried with exponential backoff;
// malformed bodies, 4xx and unnormalized distributions are not.
class RemoteBackend final : public ScorerBackend {
 public:
  explicit RemoteBackend(RemoteOptions options);
  ~RemoteBackend() override;

  Capabilities capabilities() const override;
  TokenDistribution next_token_distribution(const ImageRef& image, const TokenSeq& prefix) const override;
  std::vector<TokenDistribution> next_token_distributions(
      const ImageRef& image, std::span<const TokenSeq> prefixes) const override;
  std::vector<double> embed_image(const ImageRef& image) const override;
  std::vector<double> embed_text(const TokenSeq& sentence) const override;

  std::uint64_t requests_sent() const noexcept { return requests_sent_.load(); }

 private:
  Json post(const std::string& path, Json body) const;

  RemoteOptions options_;
  mutable std::counting_semaphore<1024> in_flight_;
  mutable std::atomic<std::uint64_t> next_request_{0};
  mutable std::atomic<std::uint64_t> requests_sent_{0};
};

struct LoopbackFaults {
  int fail_first = 0;          // answer the first N requests with 503
  double probability_scale = 1.0;  // multiply every returned probability
  bool malformed = false;      // answer with a non-JSON body
};

// Serves a local backend over the wire protocol on 127.0.0.1 (ephemeral
// port). Test double for the remote client.
class LoopbackServer {
 public:
  explicit LoopbackServer(const ScorerBackend& backend, LoopbackFaults faults = {});
  ~LoopbackServer();
  LoopbackServer(const LoopbackServer&) = delete;
  LoopbackServer& operator=(const LoopbackServer&) = delete;

  std::string endpoint() const;
  int port() const noexcept { return port_; }
  std::uint64_t requests_served() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace genret
