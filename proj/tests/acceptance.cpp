// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "genret/backends.hpp"
#include "genret/calibration.hpp"
#include "genret/metrics.hpp"
#include "genret/scoring.hpp"
#include "genret/vgarank.hpp"
#include "genret/world.hpp"
#include "oracles.hpp"

using namespace genret;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSeed = 20240611;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

// 2000 training scenes for co-occurrence stats, 500 test scenes of up to three
// entities, 50 attribute candidates per entity.
struct Benchmark {
  WorldSpec world;
  std::vector<SyntheticScene> train, test;
  std::vector<RankingInstance> instances;
  std::unique_ptr<OracleBackend> oracle;
};

const Benchmark& benchmark() {
  static Benchmark b = [] {
    Benchmark out;
    out.world = make_world(kSeed);
    SceneSampler sampler(out.world);
    std::vector<SceneGraphRecord> graphs;
    for (int i = 0; i < 2000; ++i) {
      out.train.push_back(sampler.sample_upto(3));
      graphs.push_back(to_scene_graph(out.train.back()));
    }
    for (int i = 0; i < 500; ++i) out.test.push_back(sampler.sample_upto(3));
    const auto stats = CooccurrenceStats::build(graphs);
    for (const auto& s : out.test) {
      auto xs = make_instances(s, 50, AnchorKind::Object, stats, kSeed);
      out.instances.insert(out.instances.end(), xs.begin(), xs.end());
    }
    auto scenes = out.train;
    scenes.insert(scenes.end(), out.test.begin(), out.test.end());
    out.oracle = std::make_unique<OracleBackend>(out.world, std::move(scenes));
    return out;
  }();
  return b;
}

std::vector<ScoredInstance> rank_all(const ScorerBackend& backend, const std::vector<RankingInstance>& xs,
                                     const std::string& spec, Method method) {
  const auto tmpl = Template::parse(spec);
  std::vector<ScoredInstance> out;
  for (auto& o : batch_rank(backend, xs, tmpl, method, 8)) {
    if (!o.ok()) throw std::runtime_error(o.error);
    out.push_back(std::move(*o.scored));
  }
  return out;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome oracle_soundness() {
  const auto t0 = Clock::now();
  const auto& b = benchmark();
  const auto scored = rank_all(*b.oracle, b.instances, "{O} is {A}", Method::Generative);
  std::size_t violations = 0;
  for (const auto& s : scored) {
    double worst_positive = -INFINITY;
    for (auto p : s.instance.positives) worst_positive = std::max(worst_positive, s.scores[p]);
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      if (s.instance.is_positive(j)) continue;
      if (b.world.prior(s.instance.anchor, s.instance.candidates[j]) == 0.0 && s.scores[j] <= worst_positive) {
        ++violations;
      }
    }
  }
  const double rank = mean_rank(scored);
  const double secs = seconds_since(t0);
  return {violations == 0 && rank <= 2.0 && secs < 30.0 && b.instances.front().candidates.size() == 50,
          fmt("%zu instances, mean rank %.3f (<= 2.0), %zu zero-prior violations, %.1fs (< 30s)",
              scored.size(), rank, violations, secs)};
}

Outcome method_ordering() {
  const auto& b = benchmark();
  const double gen_full = mean_rank(rank_all(*b.oracle, b.instances, "{A} {O} is {A}", Method::Generative));
  const double gen_oa = mean_rank(rank_all(*b.oracle, b.instances, "{O} is {A}", Method::Generative));
  double best_con = INFINITY;
  std::string con_detail;
  for (auto spec : kCanonicalTemplates) {
    const double r = mean_rank(rank_all(*b.oracle, b.instances, std::string(spec), Method::Contrastive));
    best_con = std::min(best_con, r);
    con_detail += fmt(" '%s' %.3f", std::string(spec).c_str(), r);
  }
  const double best_gen = std::min(gen_full, gen_oa);
  const double margin = (best_con - best_gen) / best_con;
  return {gen_full <= gen_oa && gen_oa <= best_con && margin >= 0.20,
          fmt("gen '{A} {O} is {A}' %.3f <= gen '{O} is {A}' %.3f <= con %.3f; margin %.1f%% (>= 20%%); con:%s",
              gen_full, gen_oa, best_con, 100 * margin, con_detail.c_str())};
}

Outcome order_sensitivity() {
  WorldSpec w;
  w.objects = {"cat"};
  w.attributes = {"orange"};
  w.compatibility = {{"cat", {"orange"}}};
  w.attribute_prior = {{{"cat", "orange"}, 1.0}};
  SyntheticScene scene{"witness", {{"cat", {"orange"}, {0, 0, 100, 100}}}};
  OracleBackend oracle(w, {scene});
  const ImageRef img{"witness", {}};
  const TokenSeq a{"orange", "cat"}, b{"cat", "orange"};
  const double dg = std::abs(generative_loss(oracle, img, a).value - generative_loss(oracle, img, b).value);
  const double dc = std::abs(contrastive_loss(oracle, img, a).value - contrastive_loss(oracle, img, b).value);
  return {dg > 0.1 && dc < 1e-12, fmt("'orange cat' vs 'cat orange': generative |d| %.3f nats (> 0.1), "
                                      "contrastive |d| %.1e (< 1e-12)", dg, dc)};
}

Outcome metric_equivalence() {
  auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || std::abs(a - b) <= 1e-9; };
  auto guarded = [](auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Metric) throw;
      return std::nan("");
    }
  };
  std::size_t checks = 0, mismatches = 0;
  auto check = [&](double a, double b) {
    ++checks;
    if (!same(a, b)) ++mismatches;
  };
  for (std::uint64_t f = 0; f < 100; ++f) {
    std::vector<std::vector<double>> probs;
    const auto xs = oracle::random_fixture(mix_seed(kSeed, f), &probs);
    check(mean_rank(xs), oracle::mean_rank(xs));
    for (std::size_t k : {1, 5, 15}) {
      check(mean_recall_at_k(xs, k), oracle::mean_recall(xs, k));
      check(overall_f1_at_k(xs, k), oracle::f1_at_k(xs, k));
    }
    check(guarded([&] { return mean_average_precision(xs).value; }), oracle::map_per_class(xs));
    check(guarded([&] { return mean_average_precision(xs, {}, MapPooling::PerInstance).value; }),
          oracle::map_per_instance(xs));
    check(guarded([&] { return mean_balanced_accuracy(xs, probs, 0.5); }), oracle::balanced_accuracy(xs, probs, 0.5));
  }
  return {mismatches == 0, fmt("100 fixtures, %zu comparisons, %zu mismatches beyond 1e-9", checks, mismatches)};
}

Outcome hand_cases() {
  const double ap = average_precision({true, false, true});
  auto inst = [](std::vector<std::size_t> pos) {
    ScoredInstance s;
    s.instance.image_id = "i";
    s.instance.anchor = "x";
    s.instance.candidates = {"red", "other"};
    s.instance.positives = std::move(pos);
    s.scores = {0, 0};
    return s;
  };
  // red: TP 1, FN 1, TN 2, FP 0; "other" has one label side only
  std::vector<ScoredInstance> xs{inst({0}), inst({0}), inst({1}), inst({1})};
  std::vector<std::vector<double>> probs{{0.9, 1}, {0.1, 1}, {0.1, 1}, {0.2, 1}};
  ClassFilter only_red = [](const std::string& w) { return w == "red"; };
  const double ba = mean_balanced_accuracy(xs, probs, 0.5, {}, only_red);
  return {ap == 5.0 / 6.0 && ba == 0.75, fmt("AP[+,-,+] = %.17g, balanced accuracy = %.17g", ap, ba)};
}

// Ten classes whose raw losses sit at very different offsets; within a class
// positives are 2 nats below the offset and negatives 2 above.
std::vector<ScoredInstance> offset_fixture(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<ScoredInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    ScoredInstance s;
    s.instance.image_id = "f" + std::to_string(i);
    s.instance.anchor = "thing";
    for (int c = 0; c < 10; ++c) s.instance.candidates.push_back("class" + std::to_string(c));
    s.instance.positives = {rng.below(10)};
    if (rng.bernoulli(0.5)) {
      auto extra = rng.below(10);
      if (extra != s.instance.positives[0]) s.instance.positives.push_back(extra);
    }
    for (std::size_t c = 0; c < 10; ++c) {
      const double offset = -24.0 + 2.0 * static_cast<double>(c);
      s.scores.push_back(offset + (s.instance.is_positive(c) ? -2.0 : 2.0) + rng.uniform(-1, 1));
    }
    out.push_back(std::move(s));
  }
  return out;
}

Outcome calibration() {
  // finite differences
  Rng rng(kSeed);
  std::vector<CalibrationExample> xs;
  const std::vector<std::string> classes{"red", "blue", "wooden"};
  for (int i = 0; i < 60; ++i) xs.push_back({classes[rng.below(3)], rng.uniform(-22, -8), rng.bernoulli(0.4)});
  FitConfig cfg;
  auto t = CalibrationTable::uniform(classes);
  for (std::size_t c = 0; c < t.size(); ++c) t.set(c, rng.uniform(-18, -12), rng.uniform(-1.5, 0.5));
  const auto g = calibration_gradient(t, xs, cfg);
  const double eps = 1e-4;
  double worst = 0;
  for (std::size_t c = 0; c < t.size(); ++c) {
    for (int which = 0; which < 2; ++which) {
      auto plus = t, minus = t;
      const double dm = which == 0 ? eps : 0, ds = which == 1 ? eps : 0;
      plus.set(c, t.mu(c) + dm, t.log_sigma(c) + ds);
      minus.set(c, t.mu(c) - dm, t.log_sigma(c) - ds);
      const double fd = (calibration_objective(plus, xs, cfg) - calibration_objective(minus, xs, cfg)) / (2 * eps);
      worst = std::max(worst, std::abs(fd - (which == 0 ? g.mu[c] : g.log_sigma[c])));
    }
  }

  // separable fit
  const auto train = offset_fixture(kSeed + 1, 400);
  const auto test = offset_fixture(kSeed + 2, 200);
  FitConfig fc;
  fc.learning_rate = 0.05;
  fc.steps = 20000;
  fc.batch_size = 16;
  fc.seed = kSeed;
  const auto fitted = fit(calibration_examples(train), fc);
  const double before = mean_rank(test);
  const double after = mean_rank(calibrated_scores(fitted.table, test));
  const double improvement = (before - after) / before;

  const double mid = calibrated_prob(-15, -15, 0.5);
  return {worst < 1e-5 && improvement >= 0.30 && mid == 0.5,
          fmt("max |grad - fd| %.2e (< 1e-5); mean rank %.3f -> %.3f, %.1f%% better (>= 30%%); p(L=mu) = %.17g",
              worst, before, after, 100 * improvement, mid)};
}

Outcome builder_audit() {
  const auto world = make_world(kSeed + 7);
  SceneSampler sampler(world);
  std::vector<SceneGraphRecord> train, test;
  for (int i = 0; i < 3000; ++i) train.push_back(to_scene_graph(sampler.sample_upto(3)));
  const auto stats = CooccurrenceStats::build(train);
  const BuildConfig cfg{BuildMode::Attribute, 50, kSeed};
  std::size_t built = 0, problems = 0, wrong_size = 0;
  std::string first_problem;
  std::vector<Json> rows;
  while (built < 10000) {
    test.push_back(to_scene_graph(sampler.sample_upto(3)));
    const auto& rec = test.back();
    for (std::size_t i = 0; i < rec.boxes.size(); ++i) {
      if (!is_eligible(rec.boxes[i], cfg.mode)) continue;
      const auto b = build_instance(rec, i, stats, cfg);
      const auto msgs = audit_instance(b, rec, i, stats, cfg);
      if (!msgs.empty() && first_problem.empty()) first_problem = msgs.front();
      problems += msgs.size();
      if (b.instance.candidates.size() != 50) ++wrong_size;
      rows.push_back(Json(b.instance));
      ++built;
    }
  }
  const std::string once = io::to_jsonl(rows);
  const auto rebuilt = build_split(test, stats, cfg, 8);
  std::vector<Json> again;
  for (const auto& x : rebuilt.instances) again.push_back(Json(x));
  const bool identical = io::to_jsonl(again) == once;
  return {problems == 0 && wrong_size == 0 && identical,
          fmt("%zu instances, %zu audit findings%s%s, %zu not of size 50, rebuild %s", built, problems,
              first_problem.empty() ? "" : " e.g. ", first_problem.c_str(), wrong_size,
              identical ? "byte-identical" : "DIFFERS")};
}

Outcome backend_normalization() {
  const auto& b = benchmark();
  const auto vocab = b.oracle->vocabulary();
  Rng rng(kSeed + 3);
  double worst = 0;
  for (int q = 0; q < 10000; ++q) {
    const auto& scene = b.test[rng.below(b.test.size())];
    std::optional<Box> region;
    if (rng.bernoulli(0.5)) region = scene.entities[rng.below(scene.entities.size())].box;
    TokenSeq prefix;
    if (rng.bernoulli(0.6)) {
      const auto caps = b.oracle->captions({scene.scene_id, region});
      const auto& c = caps[rng.below(caps.size())];
      prefix.assign(c.tokens.begin(), c.tokens.begin() + static_cast<std::ptrdiff_t>(rng.below(c.tokens.size() + 1)));
    } else {
      for (auto n = rng.below(4); n > 0; --n) prefix.push_back(vocab[rng.below(vocab.size())]);
    }
    worst = std::max(worst, std::abs(b.oracle->next_token_distribution({scene.scene_id, region}, prefix).total() - 1));
  }

  const std::vector<RankingInstance> subset(b.instances.begin(), b.instances.begin() + 150);
  bool cached_same = true, remote_same = true;
  for (auto method : {Method::Generative, Method::Contrastive}) {
    const auto direct = rank_all(*b.oracle, subset, "{A} {O} is {A}", method);
    std::vector<ScoreRecord> records;
    for (const auto& s : direct) {
      auto r = cache_records(s);
      records.insert(records.end(), r.begin(), r.end());
    }
    const auto path = fs::temp_directory_path() / "genret_acceptance_cache.jsonl";
    write_score_cache(path, records);
    const auto cached = CachedBackend::load(path);
    fs::remove(path);
    const auto replayed = rank_all(cached, subset, "{A} {O} is {A}", method);

    LoopbackServer server(*b.oracle);
    RemoteOptions opt;
    opt.endpoint = server.endpoint();
    opt.terminal_token = true;
    RemoteBackend remote(opt);
    const auto over_wire = rank_all(remote, subset, "{A} {O} is {A}", method);
    for (std::size_t i = 0; i < subset.size(); ++i) {
      cached_same = cached_same && replayed[i].ranking() == direct[i].ranking();
      remote_same = remote_same && over_wire[i].ranking() == replayed[i].ranking();
    }
  }
  return {worst <= 1e-6 && cached_same && remote_same,
          fmt("10000 queries, max |sum - 1| %.1e (<= 1e-6); cached == oracle rankings: %s; remote == cached: %s "
              "(150 instances, both methods)",
              worst, cached_same ? "yes" : "no", remote_same ? "yes" : "no")};
}

Outcome pipeline() {
  const auto t0 = Clock::now();
  const auto dir = fs::temp_directory_path() / "genret_acceptance_pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const char* f) { return (dir / f).string(); };
  std::ostringstream out, err;
  std::string failed;
  auto step = [&](std::vector<std::string> args) {
    if (!failed.empty()) return;
    if (genret::cli::run(args, out, err) != 0) failed = args[0] + ": " + err.str();
  };
  const std::string seed = std::to_string(kSeed);
  step({"gen-world", "--out", dir.string(), "--seed", seed});
  step({"build-dataset", "--input", p("train_graphs.json"), "--mode", "attribute", "--total", "50", "--seed", seed,
        "--out", p("train.jsonl"), "--parallelism", "8"});
  const std::vector<std::pair<std::string, std::string>> runs{
      {"{A} {O} is {A}", "generative"}, {"{O} is {A}", "generative"}, {"{A}", "generative"},
      {"{A}", "contrastive"}, {"{A} {O}", "contrastive"}};
  std::vector<std::string> reports;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& [tmpl, method] = runs[r];
    const auto tag = std::to_string(r);
    step({"score", "--instances", p("instances.jsonl"), "--template", tmpl, "--method", method, "--world",
          p("world.json"), "--scenes", p("scenes.json"), "--out", (dir / ("test" + tag + ".jsonl")).string(),
          "--parallelism", "8"});
    step({"evaluate", "--instances", p("instances.jsonl"), "--scores", (dir / ("test" + tag + ".jsonl")).string(),
          "--train-instances", p("train.jsonl"), "--out", (dir / ("report" + tag + ".json")).string()});
    reports.push_back((dir / ("report" + tag + ".json")).string());
  }
  step({"score", "--instances", p("train.jsonl"), "--template", "{A} {O} is {A}", "--world", p("world.json"),
        "--scenes", p("scenes.json"), "--out", p("train_scores.jsonl"), "--parallelism", "8"});
  step({"calibrate", "--instances", p("train.jsonl"), "--scores", p("train_scores.jsonl"), "--out", p("cal.json"),
        "--seed", seed});
  step({"evaluate", "--instances", p("instances.jsonl"), "--scores", p("test0.jsonl"), "--calibration",
        p("cal.json"), "--train-instances", p("train.jsonl"), "--out", p("report_cal.json")});
  reports.push_back(p("report_cal.json"));
  std::vector<std::string> rep{"report", "--reports"};
  rep.insert(rep.end(), reports.begin(), reports.end());
  rep.insert(rep.end(), {"--out", p("table.json")});
  const auto before_report = out.str().size();
  step(rep);
  const double secs = seconds_since(t0);

  const std::string table = out.str().substr(std::min(before_report, out.str().size()));
  const bool shaped = table.find("Con") != std::string::npos && table.find("Gen+cal") != std::string::npos &&
                      table.find("{O} is {A}") != std::string::npos && fs::exists(p("table.json"));
  if (failed.empty()) std::fputs(table.c_str(), stdout);
  return {failed.empty() && shaped && secs < 300,
          failed.empty() ? fmt("six stages in %.1fs (< 300s), table %s", secs, shaped ? "emitted" : "MISSING")
                         : "stage failed: " + failed};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"oracle ranking soundness", oracle_soundness},
      {"generative beats contrastive ordering", method_ordering},
      {"order-sensitivity witness", order_sensitivity},
      {"metric oracle equivalence", metric_equivalence},
      {"AP and balanced-accuracy hand cases", hand_cases},
      {"calibration gradients and separable fit", calibration},
      {"builder audit", builder_audit},
      {"backend normalization and replay", backend_normalization},
      {"end-to-end pipeline", pipeline},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures ? 1 : 0;
}
