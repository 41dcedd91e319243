#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <memory>
#include <set>

#include <CLI11.hpp>

#include "genret/backends.hpp"
#include "genret/calibration.hpp"
#include "genret/error.hpp"
#include "genret/metrics.hpp"
#include "genret/scoring.hpp"
#include "genret/vgarank.hpp"
#include "genret/world.hpp"

namespace genret::cli {

#define GENRET_RUN_CONFIG_FIELDS(X)                                                                      \
  X(command) X(seed) X(parallelism) X(timestamp) X(input) X(stats_from) X(instances) X(scores) X(world)  \
  X(scenes) X(cache) X(calibration) X(class_counts) X(attribute_types) X(train_instances)                \
  X(validation_instances) X(validation_scores) X(out) X(manifest) X(curve) X(text) X(reports)            \
  X(template_spec) X(template_name) X(method) X(backend) X(endpoint) X(length_normalize) X(smoothing)     \
  X(mode) X(total) X(objects) X(attributes) X(train_scenes) X(test_scenes) X(max_entities)               \
  X(anchor_kind) X(learning_rate) X(steps) X(batch_size) X(curve_every) X(weight_decay) X(ks)             \
  X(thresholds) X(head_cut) X(tail_cut) X(pooling) X(explicit_only)

Json RunConfig::to_json() const {
  Json j = Json::object();
#define X(f) j[#f] = f;
  GENRET_RUN_CONFIG_FIELDS(X)
#undef X
  return j;
}

RunConfig RunConfig::from_json(const Json& j) {
  RunConfig r;
  try {
#define X(f) r.f = j.value(#f, r.f);
    GENRET_RUN_CONFIG_FIELDS(X)
#undef X
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("run config: ") + e.what());
  }
  return r;
}

namespace {

namespace fs = std::filesystem;

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorKind::Usage, std::string("missing required option ") + flag);
}

std::string with_suffix(const std::string& path, const std::string& suffix) { return path + suffix; }

void write_config(const RunConfig& cfg, const fs::path& path) {
  Json j = cfg.to_json();
  if (cfg.timestamp) {
    j["created_at"] = static_cast<std::int64_t>(std::time(nullptr));
  }
  io::write_json(path, j);
}

LabelOptions label_options(const RunConfig& cfg) { return LabelOptions{!cfg.explicit_only}; }

// ---------------------------------------------------------------------------

int gen_world(const RunConfig& cfg, std::ostream& out) {
  require(cfg.out, "--out");
  const fs::path dir = cfg.out;
  WorldShape shape;
  shape.objects = cfg.objects;
  shape.attributes = cfg.attributes;
  const WorldSpec world = make_world(cfg.seed, shape);

  SceneSampler sampler(world);
  std::vector<SyntheticScene> train, test;
  for (std::size_t i = 0; i < cfg.train_scenes; ++i) train.push_back(sampler.sample_upto(cfg.max_entities));
  for (std::size_t i = 0; i < cfg.test_scenes; ++i) test.push_back(sampler.sample_upto(cfg.max_entities));

  std::vector<SceneGraphRecord> train_graphs, test_graphs;
  for (const auto& s : train) train_graphs.push_back(to_scene_graph(s));
  for (const auto& s : test) test_graphs.push_back(to_scene_graph(s));
  const auto stats = CooccurrenceStats::build(train_graphs);

  const AnchorKind anchor = anchor_kind_from_string(cfg.anchor_kind);
  std::vector<RankingInstance> instances;
  std::size_t skipped = 0;
  for (const auto& s : test) {
    try {
      auto batch = make_instances(s, cfg.total, anchor, stats, cfg.seed);
      instances.insert(instances.end(), batch.begin(), batch.end());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Builder) throw;
      ++skipped;
    }
  }

  std::vector<SyntheticScene> all = train;
  all.insert(all.end(), test.begin(), test.end());
  io::write_json(dir / "world.json", Json(world));
  io::write_json(dir / "scenes.json", Json(all));
  io::write_json(dir / "train_graphs.json", scene_graphs_to_json(train_graphs));
  io::write_json(dir / "test_graphs.json", scene_graphs_to_json(test_graphs));
  io::write_instances(dir / "instances.jsonl", instances);
  write_config(cfg, dir / "gen-world.config.json");
  out << "world: " << world.objects.size() << " objects, " << world.attributes.size() << " attributes\n"
      << "scenes: " << train.size() << " train, " << test.size() << " test\n"
      << "instances: " << instances.size() << " (" << skipped << " scenes skipped)\n";
  return 0;
}

int build_dataset(const RunConfig& cfg, std::ostream& out) {
  require(cfg.input, "--input");
  require(cfg.out, "--out");
  const auto records = parse_scene_graphs(io::read_json(cfg.input));
  const auto stats_records =
      cfg.stats_from.empty() ? records : parse_scene_graphs(io::read_json(cfg.stats_from));
  const auto stats = CooccurrenceStats::build(stats_records);
  const BuildConfig config{build_mode_from_string(cfg.mode), cfg.total, cfg.seed};
  const auto split = build_split(records, stats, config, cfg.parallelism);

  io::write_instances(cfg.out, split.instances);
  const std::string manifest = cfg.manifest.empty() ? with_suffix(cfg.out, ".manifest.json") : cfg.manifest;
  io::write_json(manifest, split.manifest.to_json());
  write_config(cfg, with_suffix(cfg.out, ".config.json"));
  out << "instances: " << split.manifest.emitted << " of " << split.manifest.eligible << " eligible boxes ("
      << split.manifest.shortfall << " shortfall)\n";
  return 0;
}

std::unique_ptr<ScorerBackend> make_backend(const RunConfig& cfg) {
  if (cfg.backend == "oracle") {
    require(cfg.world, "--world");
    require(cfg.scenes, "--scenes");
    auto world = io::read_json(cfg.world).get<WorldSpec>();
    auto scenes = io::read_json(cfg.scenes).get<std::vector<SyntheticScene>>();
    return std::make_unique<OracleBackend>(world, std::move(scenes), OracleOptions{cfg.smoothing, true});
  }
  if (cfg.backend == "cached") {
    require(cfg.cache, "--cache");
    return std::make_unique<CachedBackend>(CachedBackend::load(cfg.cache));
  }
  if (cfg.backend == "remote") {
    std::string endpoint = cfg.endpoint;
    if (const char* env = std::getenv("GENRET_REMOTE_ENDPOINT"); env && *env) endpoint = env;
    require(endpoint, "--endpoint (or GENRET_REMOTE_ENDPOINT)");
    RemoteOptions options;
    options.endpoint = endpoint;
    return std::make_unique<RemoteBackend>(options);
  }
  throw Error(ErrorKind::Usage, "unknown backend '" + cfg.backend + "' (oracle, cached, remote)");
}

int score(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require(cfg.instances, "--instances");
  require(cfg.template_spec, "--template");
  require(cfg.out, "--out");
  const auto instances = io::read_instances(cfg.instances);
  const auto tmpl = Template::parse(cfg.template_spec, std::nullopt, cfg.template_name);
  const Method method = method_from_string(cfg.method);
  const auto backend = make_backend(cfg);

  const auto outcomes =
      batch_rank(*backend, instances, tmpl, method, cfg.parallelism, ScoringOptions{cfg.length_normalize});
  std::vector<ScoreRecord> records;
  std::size_t failed = 0;
  for (const auto& o : outcomes) {
    if (o.ok()) {
      auto rows = cache_records(*o.scored);
      records.insert(records.end(), rows.begin(), rows.end());
    } else {
      ++failed;
      err << "failed: " << o.error << "\n";
    }
  }
  write_score_cache(cfg.out, records);
  write_config(cfg, with_suffix(cfg.out, ".config.json"));
  out << "scored " << (outcomes.size() - failed) << " of " << outcomes.size() << " instances with '"
      << tmpl.name() << "' (" << to_string(method) << ")\n";
  return failed ? 1 : 0;
}

// Rebuilds scored instances from a score cache. The template and method
// default to the single ones recorded in the cache.
std::vector<ScoredInstance> load_scored(const std::string& instances_path, const std::string& scores_path,
                                        const RunConfig& cfg) {
  const auto instances = io::read_instances(instances_path);
  const auto records = read_score_cache(scores_path);
  std::set<std::string> names;
  std::set<Method> methods;
  for (const auto& r : records) {
    names.insert(r.template_name);
    methods.insert(r.method);
  }
  if (records.empty() && !instances.empty()) throw Error(ErrorKind::Schema, scores_path + " is empty");
  if (names.size() > 1 || methods.size() > 1) {
    throw Error(ErrorKind::Schema, scores_path + " mixes templates or methods; score them separately");
  }
  const std::string name = names.empty() ? cfg.template_spec : *names.begin();
  const auto tmpl = Template::parse(cfg.template_spec.empty() ? name : cfg.template_spec, std::nullopt, name);
  const Method method = methods.empty() ? method_from_string(cfg.method) : *methods.begin();

  const CachedBackend cached(records);
  std::vector<ScoredInstance> scored;
  scored.reserve(instances.size());
  for (const auto& inst : instances) {
    scored.push_back(rank_instance(cached, inst, tmpl, method, ScoringOptions{cfg.length_normalize}));
  }
  return scored;
}

FitConfig fit_config(const RunConfig& cfg) {
  FitConfig c;
  c.learning_rate = cfg.learning_rate;
  c.steps = cfg.steps;
  c.batch_size = cfg.batch_size;
  c.weight_decay = cfg.weight_decay;
  c.seed = cfg.seed;
  c.curve_every = cfg.curve_every;
  return c;
}

int calibrate(const RunConfig& cfg, std::ostream& out) {
  require(cfg.instances, "--instances");
  require(cfg.scores, "--scores");
  require(cfg.out, "--out");
  const auto train = calibration_examples(load_scored(cfg.instances, cfg.scores, cfg), label_options(cfg));
  std::vector<CalibrationExample> validation;
  if (!cfg.validation_instances.empty()) {
    require(cfg.validation_scores, "--validation-scores");
    validation = calibration_examples(load_scored(cfg.validation_instances, cfg.validation_scores, cfg),
                                      label_options(cfg));
  }
  const auto result = fit(train, fit_config(cfg), validation.empty() ? nullptr : &validation);
  io::write_json(cfg.out, result.table.to_json());
  const std::string curve = cfg.curve.empty() ? with_suffix(cfg.out, ".curve.csv") : cfg.curve;
  io::write_text_atomic(curve, curve_csv(result.curve));
  write_config(cfg, with_suffix(cfg.out, ".config.json"));
  const auto& first = result.curve.front();
  const auto& last = result.curve.back();
  out << "classes: " << result.table.size() << "  examples: " << train.size() << "\n"
      << "train loss: " << first.train_loss << " -> " << last.train_loss << "\n";
  if (last.validation_loss) out << "validation loss: " << *first.validation_loss << " -> " << *last.validation_loss << "\n";
  return 0;
}

ClassMetaMap class_meta(const RunConfig& cfg, const std::vector<ScoredInstance>& scored) {
  std::map<std::string, std::uint64_t> counts;
  if (!cfg.class_counts.empty()) {
    counts = io::read_json(cfg.class_counts).get<std::map<std::string, std::uint64_t>>();
  } else {
    auto count_positives = [&](const std::vector<RankingInstance>& insts) {
      for (const auto& i : insts)
        for (auto p : i.positives) ++counts[i.candidates[p]];
    };
    if (!cfg.train_instances.empty()) {
      count_positives(io::read_instances(cfg.train_instances));
    } else {
      std::vector<RankingInstance> insts;
      for (const auto& s : scored) insts.push_back(s.instance);
      count_positives(insts);
    }
  }
  for (const auto& s : scored)
    for (const auto& c : s.instance.candidates) counts.try_emplace(c, 0);
  auto meta = bucketize(counts, BucketCuts{cfg.head_cut, cfg.tail_cut});
  if (!cfg.attribute_types.empty()) {
    for (const auto& [word, type] : io::read_json(cfg.attribute_types).items()) {
      auto it = meta.find(normalize_word(word));
      if (it != meta.end()) it->second.type = attribute_type_from_string(type.get<std::string>());
    }
  }
  return meta;
}

int evaluate_cmd(const RunConfig& cfg, std::ostream& out) {
  require(cfg.instances, "--instances");
  require(cfg.scores, "--scores");
  require(cfg.out, "--out");
  const auto scored = load_scored(cfg.instances, cfg.scores, cfg);
  const auto meta = class_meta(cfg, scored);
  ReportConfig rc;
  rc.ks = cfg.ks;
  rc.thresholds = cfg.thresholds;
  rc.labels = label_options(cfg);
  rc.cuts = BucketCuts{cfg.head_cut, cfg.tail_cut};
  if (cfg.pooling == "per-class") {
    rc.pooling = MapPooling::PerClass;
  } else if (cfg.pooling == "per-instance") {
    rc.pooling = MapPooling::PerInstance;
  } else {
    throw Error(ErrorKind::Usage, "unknown pooling '" + cfg.pooling + "'");
  }

  MetricReport report;
  if (!cfg.calibration.empty()) {
    const auto table = CalibrationTable::from_json(io::read_json(cfg.calibration));
    const auto probs = apply(table, scored);
    report = evaluate(calibrated_scores(table, scored), meta, rc, &probs);
  } else {
    report = evaluate(scored, meta, rc);
  }
  io::write_json(cfg.out, report.to_json());
  const auto text = report.to_text();
  io::write_text_atomic(cfg.text.empty() ? with_suffix(cfg.out, ".txt") : cfg.text, text);
  write_config(cfg, with_suffix(cfg.out, ".config.json"));
  out << text;
  return 0;
}

int report_cmd(const RunConfig& cfg, std::ostream& out) {
  if (cfg.reports.empty()) throw Error(ErrorKind::Usage, "missing required option --reports");
  require(cfg.out, "--out");
  std::vector<MetricReport> reports;
  for (const auto& path : cfg.reports) reports.push_back(MetricReport::from_json(io::read_json(path)));
  const auto text = method_template_table(reports);
  io::write_json(cfg.out, method_template_table_json(reports));
  io::write_text_atomic(cfg.text.empty() ? with_suffix(cfg.out, ".txt") : cfg.text, text);
  write_config(cfg, with_suffix(cfg.out, ".config.json"));
  out << text;
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Configuration:
    case ErrorKind::TemplateSyntax:
      return 2;
    case ErrorKind::Io:
      return 3;
    case ErrorKind::Schema:
      return 4;
    default:
      return 1;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  // A replayed config seeds the defaults; explicit flags then override it.
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--config") {
      try {
        cfg = RunConfig::from_json(io::read_json(args[i + 1]));
      } catch (const Error& e) {
        err << e.what() << "\n";
        return exit_code(e.kind());
      }
    }
  }

  CLI::App app{"Generative retrieval for attribute and object recognition"};
  app.require_subcommand(1);
  std::string config_file;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "Replay a <output>.config.json file");
    sub->add_option("--seed", cfg.seed, "Seed for every random choice");
    sub->add_flag("--timestamp", cfg.timestamp, "Record creation time in the written config");
  };

  auto* gen = app.add_subcommand("gen-world", "Generate a synthetic world, scenes and ranking instances");
  common(gen);
  gen->add_option("--out", cfg.out, "Output directory");
  gen->add_option("--objects", cfg.objects);
  gen->add_option("--attributes", cfg.attributes);
  gen->add_option("--train-scenes", cfg.train_scenes);
  gen->add_option("--test-scenes", cfg.test_scenes);
  gen->add_option("--max-entities", cfg.max_entities);
  gen->add_option("--candidates", cfg.total, "Candidates per instance");
  gen->add_option("--anchor-kind", cfg.anchor_kind, "object (rank attributes) or attribute (rank objects)");

  auto* build = app.add_subcommand("build-dataset", "Build VGARank instances from scene-graph JSON");
  common(build);
  build->add_option("--input", cfg.input, "Scene graphs to build instances from");
  build->add_option("--stats-from", cfg.stats_from, "Training scene graphs for co-occurrence stats");
  build->add_option("--mode", cfg.mode, "attribute or object");
  build->add_option("--total", cfg.total, "Candidates per instance");
  build->add_option("--parallelism", cfg.parallelism);
  build->add_option("--out", cfg.out, "Instances JSONL");
  build->add_option("--manifest", cfg.manifest);

  auto* sc = app.add_subcommand("score", "Score instances and write a score cache");
  common(sc);
  sc->add_option("--instances", cfg.instances);
  sc->add_option("--template", cfg.template_spec, "e.g. \"{A} {O} is {A}\"");
  sc->add_option("--template-name", cfg.template_name);
  sc->add_option("--method", cfg.method, "generative or contrastive");
  sc->add_option("--backend", cfg.backend, "oracle, cached or remote");
  sc->add_option("--world", cfg.world);
  sc->add_option("--scenes", cfg.scenes);
  sc->add_option("--cache", cfg.cache);
  sc->add_option("--endpoint", cfg.endpoint, "Remote base URL; GENRET_REMOTE_ENDPOINT overrides");
  sc->add_option("--smoothing", cfg.smoothing);
  sc->add_option("--parallelism", cfg.parallelism);
  sc->add_flag("--length-normalize", cfg.length_normalize);
  sc->add_option("--out", cfg.out, "Score cache JSONL");

  auto* cal = app.add_subcommand("calibrate", "Fit per-class calibration from a score cache");
  common(cal);
  cal->add_option("--instances", cfg.instances);
  cal->add_option("--scores", cfg.scores);
  cal->add_option("--template", cfg.template_spec);
  cal->add_option("--validation-instances", cfg.validation_instances);
  cal->add_option("--validation-scores", cfg.validation_scores);
  cal->add_option("--lr", cfg.learning_rate);
  cal->add_option("--steps", cfg.steps);
  cal->add_option("--batch-size", cfg.batch_size);
  cal->add_option("--weight-decay", cfg.weight_decay);
  cal->add_option("--curve-every", cfg.curve_every);
  cal->add_flag("--length-normalize", cfg.length_normalize);
  cal->add_flag("--explicit-only", cfg.explicit_only, "Ignore unlabeled candidates");
  cal->add_option("--out", cfg.out, "Calibration table JSON");
  cal->add_option("--curve", cfg.curve, "Loss curve CSV");

  auto* ev = app.add_subcommand("evaluate", "Compute ranking metrics from a score cache");
  common(ev);
  ev->add_option("--instances", cfg.instances);
  ev->add_option("--scores", cfg.scores);
  ev->add_option("--template", cfg.template_spec);
  ev->add_option("--calibration", cfg.calibration);
  ev->add_option("--class-counts", cfg.class_counts, "JSON {class: training count}");
  ev->add_option("--train-instances", cfg.train_instances, "Count training positives for buckets");
  ev->add_option("--attribute-types", cfg.attribute_types, "JSON {class: type}");
  ev->add_option("--k", cfg.ks);
  ev->add_option("--threshold", cfg.thresholds);
  ev->add_option("--head-cut", cfg.head_cut);
  ev->add_option("--tail-cut", cfg.tail_cut);
  ev->add_option("--pooling", cfg.pooling, "per-class or per-instance");
  ev->add_flag("--explicit-only", cfg.explicit_only, "Ignore unlabeled candidates");
  ev->add_flag("--length-normalize", cfg.length_normalize);
  ev->add_option("--out", cfg.out, "Metric report JSON");
  ev->add_option("--text", cfg.text);

  auto* rep = app.add_subcommand("report", "Tabulate metric reports by method and template");
  common(rep);
  rep->add_option("--reports", cfg.reports)->expected(1, -1);
  rep->add_option("--out", cfg.out);
  rep->add_option("--text", cfg.text);

  std::vector<const char*> argv{"genret"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  auto* sub = app.get_subcommands().front();
  cfg.command = sub->get_name();
  try {
    if (sub == gen) return gen_world(cfg, out);
    if (sub == build) return build_dataset(cfg, out);
    if (sub == sc) return score(cfg, out, err);
    if (sub == cal) return calibrate(cfg, out);
    if (sub == ev) return evaluate_cmd(cfg, out);
    if (sub == rep) return report_cmd(cfg, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return 3;
  } catch (const Json::exception& e) {
    err << "schema error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}

}  // namespace genret::cli
