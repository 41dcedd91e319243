#pragma once

// Ranking and classification statistics over scored instances. Rank-based
// metrics use the ascending-loss order with ties broken by candidate index.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "genret/io.hpp"
#include "genret/types.hpp"

namespace genret {

enum class FrequencyBucket { Head, Medium, Tail };
enum class AttributeType { Color, Material, Shape, Size, Texture, Action, Other };

std::string_view to_string(FrequencyBucket bucket);
std::string_view to_string(AttributeType type);
AttributeType attribute_type_from_string(std::string_view text);

struct ClassMeta {
  std::string word;
  FrequencyBucket bucket = FrequencyBucket::Tail;
  std::optional<AttributeType> type;
};

using ClassMetaMap = std::map<std::string, ClassMeta>;

// Training-set occurrence cutoffs. Head: count >= head_cut; Tail: count <
// tail_cut; Medium otherwise.
struct BucketCuts {
  std::uint64_t head_cut = 5000;
  std::uint64_t tail_cut = 500;
};

FrequencyBucket bucket_of(std::uint64_t count, const BucketCuts& cuts);

// Throws Error(Parameter) unless head_cut > tail_cut >= 1.
ClassMetaMap bucketize(const std::map<std::string, std::uint64_t>& counts, const BucketCuts& cuts);

// Restricts class-mean metrics to a subset of classes; empty means all.
using ClassFilter = std::function<bool(const std::string&)>;

enum class MapPooling {
  PerClass,     // one ranked list per class, pooled over instances
  PerInstance,  // one ranked list per instance over its candidates
};

struct LabelOptions {
  // For instances without explicit negatives: treat non-positives as
  // negatives (VGARank-style) or leave them unlabeled.
  bool unlabeled_as_negative = true;
};

// Mean over all positives of 1 + (candidates ranked ahead). Throws
// Error(Metric) for empty input.
double mean_rank(const std::vector<ScoredInstance>& scored);

// Unweighted mean over classes of the fraction of that class's positives
// ranked within the top k of their instance.
double mean_recall_at_k(const std::vector<ScoredInstance>& scored, std::size_t k,
                        const ClassFilter& filter = {});

struct ApResult {
  double value = 0;
  std::size_t classes = 0;
  std::vector<std::string> skipped;  // classes without positives or without negatives
};

// Average precision of a ranked label list (true = positive), in order.
double average_precision(const std::vector<bool>& ranked_labels);

ApResult mean_average_precision(const std::vector<ScoredInstance>& scored, const LabelOptions& labels = {},
                                MapPooling pooling = MapPooling::PerClass, const ClassFilter& filter = {});

// probs[i][j] is the calibrated probability of candidate j of instance i.
// A candidate is predicted positive when prob >= threshold. Classes lacking
// either labeled side are excluded.
double mean_balanced_accuracy(const std::vector<ScoredInstance>& scored,
                              const std::vector<std::vector<double>>& probs, double threshold,
                              const LabelOptions& labels = {}, const ClassFilter& filter = {});

// Micro F1 with every instance's top-k as predictions.
double overall_f1_at_k(const std::vector<ScoredInstance>& scored, std::size_t k);

struct GroupMetrics {
  std::size_t classes = 0;
  std::optional<double> map;
  std::map<std::size_t, double> recall_at_k;
};

struct ReportConfig {
  std::vector<std::size_t> ks = {15};
  std::vector<double> thresholds = {0.005};
  LabelOptions labels;
  MapPooling pooling = MapPooling::PerClass;
  BucketCuts cuts;
};

struct MetricReport {
  std::string method;
  std::string template_name;
  bool calibrated = false;
  std::size_t instances = 0;
  std::size_t positives = 0;
  double mean_rank = 0;
  std::map<std::size_t, double> recall_at_k;
  std::optional<double> map;
  std::map<double, double> balanced_accuracy;  // threshold -> mA
  std::map<std::size_t, double> f1_at_k;
  std::map<std::string, GroupMetrics> per_bucket;
  std::map<std::string, GroupMetrics> per_type;
  BucketCuts cuts;
  std::vector<std::string> warnings;

  Json to_json() const;
  static MetricReport from_json(const Json& j);
  std::string to_text() const;
};

// mA is reported only when `probs` is supplied.
MetricReport evaluate(const std::vector<ScoredInstance>& scored, const ClassMetaMap& meta,
                      const ReportConfig& config,
                      const std::vector<std::vector<double>>* probs = nullptr);

// Mean-rank grid with Con/Gen rows and template columns (canonical templates
// first), in aligned text and JSON.
std::string method_template_table(const std::vector<MetricReport>& reports);
Json method_template_table_json(const std::vector<MetricReport>& reports);

}  // namespace genret
