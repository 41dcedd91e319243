#include "genret/backends.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>

#include "genret/error.hpp"

namespace genret {

// ---------------------------------------------------------------------------
// Oracle

OracleBackend::OracleBackend(std::vector<std::string> vocabulary, std::vector<SyntheticScene> scenes,
                             OracleOptions options)
    : options_(options) {
  if (!(options_.smoothing >= 0.0 && options_.smoothing < 1.0)) {
    throw Error(ErrorKind::Parameter, "oracle smoothing must lie in [0, 1)");
  }
  std::sort(vocabulary.begin(), vocabulary.end());
  vocabulary.erase(std::unique(vocabulary.begin(), vocabulary.end()), vocabulary.end());
  vocabulary_ = std::move(vocabulary);
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) token_index_[vocabulary_[i]] = i;
  for (auto& s : scenes) {
    auto caps = caption_process(s);
    for (const auto& c : caps) {
      for (const auto& t : c.tokens) {
        if (!token_index_.count(t)) {
          throw Error(ErrorKind::Vocabulary, "scene " + s.scene_id + " emits '" + t + "' outside the vocabulary");
        }
      }
    }
    full_captions_[s.scene_id] = std::move(caps);
    auto id = s.scene_id;
    scenes_.emplace(std::move(id), std::move(s));
  }
}

OracleBackend::OracleBackend(const WorldSpec& world, std::vector<SyntheticScene> scenes, OracleOptions options)
    : OracleBackend(world.vocabulary(), std::move(scenes), options) {}

Capabilities OracleBackend::capabilities() const {
  return {.has_generative = true,
          .has_contrastive = true,
          .has_terminal_token = options_.terminal_token,
          .concurrent_safe = true};
}

const SyntheticScene& OracleBackend::scene(const std::string& image_id) const {
  auto it = scenes_.find(image_id);
  if (it == scenes_.end()) throw Error(ErrorKind::Lookup, "unknown image id '" + image_id + "'");
  return it->second;
}

std::vector<Caption> OracleBackend::captions(const ImageRef& image) const {
  const auto& s = scene(image.image_id);
  if (!image.region) return full_captions_.at(image.image_id);
  return caption_process(s.crop(image.region));
}

std::size_t OracleBackend::index_of(const std::string& token) const {
  auto it = token_index_.find(token);
  if (it == token_index_.end()) throw Error(ErrorKind::Vocabulary, "token '" + token + "' is not in the vocabulary");
  return it->second;
}

TokenDistribution OracleBackend::next_token_distribution(const ImageRef& image, const TokenSeq& prefix) const {
  const auto caps = captions(image);
  const std::size_t k = prefix.size();
  std::vector<double> next(vocabulary_.size(), 0.0);
  double ended = 0.0;
  for (const auto& c : caps) {
    if (c.tokens.size() < k || !std::equal(prefix.begin(), prefix.end(), c.tokens.begin())) continue;
    if (c.tokens.size() == k) {
      ended += c.probability;
    } else {
      next[index_of(c.tokens[k])] += c.probability;
    }
  }
  double mass = 0.0;
  for (double p : next) mass += p;
  if (options_.terminal_token) mass += ended;

  const double outcomes = static_cast<double>(vocabulary_.size() + (options_.terminal_token ? 1 : 0));
  TokenDistribution dist;
  if (mass <= 0.0) {
    // No caption continues this prefix: the smoothing floor is all there is.
    for (const auto& t : vocabulary_) dist.probs.emplace(t, 1.0 / outcomes);
    if (options_.terminal_token) dist.terminal_p = 1.0 / outcomes;
    return dist;
  }
  const double lambda = options_.smoothing;
  const double floor = lambda / outcomes;
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    dist.probs.emplace(vocabulary_[i], (1.0 - lambda) * next[i] / mass + floor);
  }
  if (options_.terminal_token) dist.terminal_p = (1.0 - lambda) * ended / mass + floor;
  return dist;
}

namespace {

std::vector<double> normalized(std::vector<double> v) {
  const double norm = l2_norm(v);
  if (norm <= 0.0) throw Error(ErrorKind::Argument, "cannot normalize a zero embedding");
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

std::vector<double> OracleBackend::embed_image(const ImageRef& image) const {
  std::vector<double> v(vocabulary_.size(), 0.0);
  for (const auto& c : captions(image)) {
    for (const auto& t : c.tokens) v[index_of(t)] += c.probability;
  }
  return normalized(std::move(v));
}

std::vector<double> OracleBackend::embed_text(const TokenSeq& sentence) const {
  if (sentence.empty()) throw Error(ErrorKind::Argument, "cannot embed an empty sentence");
  std::vector<double> v(vocabulary_.size(), 0.0);
  for (const auto& t : sentence) v[index_of(t)] += 1.0;
  return normalized(std::move(v));
}

// ---------------------------------------------------------------------------
// Cache replay

namespace {

std::string cache_key(const std::string& image_id, const std::optional<Box>& region, Method method,
                      const TokenSeq& sentence) {
  std::string key = image_id;
  key += '\x1e';
  key += region_to_json(region).dump();
  key += '\x1e';
  key += to_string(method);
  key += '\x1e';
  for (const auto& t : sentence) {
    key += t;
    key += '\x1f';
  }
  return key;
}

}  // namespace

CachedBackend::CachedBackend(const std::vector<ScoreRecord>& records) {
  for (const auto& r : records) {
    entries_[cache_key(r.image_id, r.region, r.method, r.sentence)] = RecordedScore{r.loss, r.per_token};
  }
}

CachedBackend CachedBackend::load(const std::filesystem::path& cache_file) {
  return CachedBackend(read_score_cache(cache_file));
}

Capabilities CachedBackend::capabilities() const {
  return {.has_generative = true, .has_contrastive = true, .has_terminal_token = false, .concurrent_safe = true};
}

std::optional<RecordedScore> CachedBackend::recorded_score(const ImageRef& image, const TokenSeq& sentence,
                                                           Method method) const {
  auto it = entries_.find(cache_key(image.image_id, image.region, method, sentence));
  if (it == entries_.end()) {
    throw Error(ErrorKind::Lookup, "no cached " + std::string(to_string(method)) + " score for image " +
                                       image.image_id + ", sentence '" + join_words(sentence) + "'");
  }
  return it->second;
}

TokenDistribution CachedBackend::next_token_distribution(const ImageRef& image, const TokenSeq&) const {
  throw Error(ErrorKind::Lookup, "score cache holds sentence scores only, not distributions (image " +
                                     image.image_id + ")");
}

// ---------------------------------------------------------------------------
// Remote client

RemoteBackend::RemoteBackend(RemoteOptions options)
    : options_(std::move(options)), in_flight_(std::clamp<std::ptrdiff_t>(options_.max_in_flight, 1, 1024)) {
  if (options_.endpoint.empty()) throw Error(ErrorKind::Configuration, "remote endpoint is empty");
  if (options_.max_retries < 0) throw Error(ErrorKind::Configuration, "max_retries must be >= 0");
}

RemoteBackend::~RemoteBackend() = default;

Capabilities RemoteBackend::capabilities() const {
  return {.has_generative = true,
          .has_contrastive = true,
          .has_terminal_token = options_.terminal_token,
          .concurrent_safe = true};
}

namespace {

struct SemaphoreSlot {
  explicit SemaphoreSlot(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SemaphoreSlot() { sem.release(); }
  std::counting_semaphore<1024>& sem;
};

}  // namespace

Json RemoteBackend::post(const std::string& path, Json body) const {
  SemaphoreSlot slot(in_flight_);
  const std::string request_id = "req-" + std::to_string(next_request_++);
  body["request_id"] = request_id;
  const std::string payload = body.dump();

  std::string last_error;
  std::string last_body;
  int last_status = 0;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.initial_backoff * (1 << (attempt - 1)));
    httplib::Client client(options_.endpoint);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    ++requests_sent_;
    auto res = client.Post(path, payload, "application/json");
    if (!res) {
      last_error = "request to " + options_.endpoint + path + " failed: " + httplib::to_string(res.error());
      last_body.clear();
      last_status = 0;
      continue;
    }
    if (res->status >= 500) {
      last_error = "server returned status " + std::to_string(res->status);
      last_body = res->body;
      last_status = res->status;
      continue;
    }
    if (res->status != 200) {
      throw TransportError(path + " returned status " + std::to_string(res->status), res->body, res->status);
    }
    Json reply;
    try {
      reply = Json::parse(res->body);
    } catch (const Json::parse_error&) {
      throw TransportError(path + ": malformed response body", res->body, res->status);
    }
    if (!reply.is_object() || reply.value("request_id", std::string{}) != request_id) {
      throw TransportError(path + ": response does not echo request_id " + request_id, res->body, res->status);
    }
    return reply;
  }
  throw TransportError("giving up after " + std::to_string(options_.max_retries + 1) + " attempts: " + last_error,
                       last_body, last_status);
}

namespace {

Json image_fields(const ImageRef& image) {
  Json j{{"image_id", image.image_id}};
  if (image.region) j["region"] = *image.region;
  return j;
}

}  // namespace

TokenDistribution RemoteBackend::next_token_distribution(const ImageRef& image, const TokenSeq& prefix) const {
  return next_token_distributions(image, std::span<const TokenSeq>(&prefix, 1)).front();
}

std::vector<TokenDistribution> RemoteBackend::next_token_distributions(const ImageRef& image,
                                                                       std::span<const TokenSeq> prefixes) const {
  Json body = image_fields(image);
  Json queries = Json::array();
  for (const auto& p : prefixes) queries.push_back({{"prefix", p}});
  body["queries"] = std::move(queries);
  const Json reply = post("/v1/logprobs", std::move(body));

  std::vector<TokenDistribution> out;
  try {
    const auto& results = reply.at("results");
    if (!results.is_array() || results.size() != prefixes.size()) {
      throw TransportError("/v1/logprobs: expected " + std::to_string(prefixes.size()) + " results",
                           reply.dump());
    }
    for (const auto& r : results) {
      TokenDistribution d;
      for (const auto& [token, p] : r.at("probs").items()) d.probs.emplace(token, p.get<double>());
      if (r.contains("terminal_p") && !r.at("terminal_p").is_null()) d.terminal_p = r.at("terminal_p").get<double>();
      out.push_back(std::move(d));
    }
  } catch (const Json::exception& e) {
    throw TransportError(std::string("/v1/logprobs: malformed response: ") + e.what(), reply.dump());
  }
  for (const auto& d : out) d.check_normalized("remote response for image " + image.image_id);
  return out;
}

namespace {

std::vector<double> read_vector(const Json& reply) {
  try {
    return reply.at("vector").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw TransportError(std::string("/v1/embed: malformed response: ") + e.what(), reply.dump());
  }
}

}  // namespace

std::vector<double> RemoteBackend::embed_image(const ImageRef& image) const {
  return read_vector(post("/v1/embed", image_fields(image)));
}

std::vector<double> RemoteBackend::embed_text(const TokenSeq& sentence) const {
  if (sentence.empty()) throw Error(ErrorKind::Argument, "cannot embed an empty sentence");
  return read_vector(post("/v1/embed", Json{{"text", sentence}}));
}

// ---------------------------------------------------------------------------
// Loopback server

struct LoopbackServer::Impl {
  const ScorerBackend& backend;
  LoopbackFaults faults;
  httplib::Server server;
  std::thread thread;
  std::atomic<std::uint64_t> served{0};
  std::atomic<int> failures_left{0};

  Impl(const ScorerBackend& b, LoopbackFaults f) : backend(b), faults(f), failures_left(f.fail_first) {}

  // Shared prologue: fault injection and request parsing. Returns false when
  // the response has already been written.
  bool begin(const httplib::Request& req, httplib::Response& res, Json& body) {
    ++served;
    if (failures_left.fetch_sub(1) > 0) {
      res.status = 503;
      res.set_content(R"({"error":"injected failure"})", "application/json");
      return false;
    }
    if (faults.malformed) {
      res.status = 200;
      res.set_content("not json", "text/plain");
      return false;
    }
    try {
      body = Json::parse(req.body);
    } catch (const Json::parse_error& e) {
      res.status = 400;
      res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
      return false;
    }
    return true;
  }

  static ImageRef image_of(const Json& body) {
    return {id_from_json(body.at("image_id")),
            body.contains("region") ? region_from_json(body.at("region")) : std::nullopt};
  }

  template <class Fn>
  void respond(httplib::Response& res, Fn&& fn) {
    try {
      res.set_content(fn().dump(), "application/json");
      res.status = 200;
    } catch (const Error& e) {
      res.status = e.kind() == ErrorKind::Lookup ? 404 : 422;
      res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
    }
  }
};

LoopbackServer::LoopbackServer(const ScorerBackend& backend, LoopbackFaults faults)
    : impl_(std::make_unique<Impl>(backend, faults)) {
  auto* impl = impl_.get();
  impl->server.Post("/v1/logprobs", [impl](const httplib::Request& req, httplib::Response& res) {
    Json body;
    if (!impl->begin(req, res, body)) return;
    impl->respond(res, [&] {
      const auto image = Impl::image_of(body);
      std::vector<TokenSeq> prefixes;
      for (const auto& q : body.at("queries")) prefixes.push_back(q.at("prefix").get<TokenSeq>());
      const auto dists = impl->backend.next_token_distributions(image, prefixes);
      Json results = Json::array();
      for (const auto& d : dists) {
        Json probs = Json::object();
        for (const auto& [t, p] : d.probs) probs[t] = p * impl->faults.probability_scale;
        Json r{{"probs", std::move(probs)}};
        if (d.terminal_p) r["terminal_p"] = *d.terminal_p * impl->faults.probability_scale;
        results.push_back(std::move(r));
      }
      return Json{{"request_id", body.at("request_id")}, {"results", std::move(results)}};
    });
  });
  impl->server.Post("/v1/embed", [impl](const httplib::Request& req, httplib::Response& res) {
    Json body;
    if (!impl->begin(req, res, body)) return;
    impl->respond(res, [&] {
      std::vector<double> v = body.contains("text") ? impl->backend.embed_text(body.at("text").get<TokenSeq>())
                                                    : impl->backend.embed_image(Impl::image_of(body));
      return Json{{"request_id", body.at("request_id")}, {"vector", std::move(v)}};
    });
  });
  port_ = impl->server.bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw Error(ErrorKind::Transport, "loopback server could not bind");
  impl->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  impl->server.wait_until_ready();
}

LoopbackServer::~LoopbackServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string LoopbackServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::uint64_t LoopbackServer::requests_served() const noexcept { return impl_->served.load(); }

}  // namespace genret
