#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "genret/io.hpp"

namespace genret::cli {

// Every resolved option of a run. Each command writes it next to its primary
// output as <output>.config.json; `--config` replays such a file, with flags
// given on the command line taking precedence.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
  bool timestamp = false;

  // paths
  std::string input, stats_from, instances, scores, world, scenes, cache, calibration;
  std::string class_counts, attribute_types, train_instances, validation_instances, validation_scores;
  std::string out, manifest, curve, text;
  std::vector<std::string> reports;

  // scoring
  std::string template_spec, template_name, method = "generative", backend = "oracle", endpoint;
  bool length_normalize = false;
  double smoothing = 1e-6;

  // dataset building and world generation
  std::string mode = "attribute";
  std::size_t total = 50;
  std::size_t objects = 20, attributes = 64, train_scenes = 2000, test_scenes = 500, max_entities = 3;
  std::string anchor_kind = "object";

  // calibration
  double learning_rate = 1e-5;
  std::size_t steps = 100000, batch_size = 4, curve_every = 0;
  double weight_decay = 0.01;

  // metrics
  std::vector<std::size_t> ks = {15};
  std::vector<double> thresholds = {0.005};
  std::uint64_t head_cut = 5000, tail_cut = 500;
  std::string pooling = "per-class";
  bool explicit_only = false;

  Json to_json() const;
  static RunConfig from_json(const Json& j);
};

// Exit codes: 0 ok, 1 runtime/data error, 2 usage, 3 I/O, 4 schema.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace genret::cli
