#include "genret/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "genret/error.hpp"

namespace genret {

std::string_view to_string(FrequencyBucket bucket) {
  switch (bucket) {
    case FrequencyBucket::Head: return "head";
    case FrequencyBucket::Medium: return "medium";
    case FrequencyBucket::Tail: return "tail";
  }
  return "tail";
}

std::string_view to_string(AttributeType type) {
  switch (type) {
    case AttributeType::Color: return "color";
    case AttributeType::Material: return "material";
    case AttributeType::Shape: return "shape";
    case AttributeType::Size: return "size";
    case AttributeType::Texture: return "texture";
    case AttributeType::Action: return "action";
    case AttributeType::Other: return "other";
  }
  return "other";
}

AttributeType attribute_type_from_string(std::string_view text) {
  for (auto t : {AttributeType::Color, AttributeType::Material, AttributeType::Shape, AttributeType::Size,
                 AttributeType::Texture, AttributeType::Action, AttributeType::Other}) {
    if (to_string(t) == text) return t;
  }
  throw Error(ErrorKind::Schema, "unknown attribute type '" + std::string(text) + "'");
}

FrequencyBucket bucket_of(std::uint64_t count, const BucketCuts& cuts) {
  if (count >= cuts.head_cut) return FrequencyBucket::Head;
  if (count < cuts.tail_cut) return FrequencyBucket::Tail;
  return FrequencyBucket::Medium;
}

ClassMetaMap bucketize(const std::map<std::string, std::uint64_t>& counts, const BucketCuts& cuts) {
  if (!(cuts.head_cut > cuts.tail_cut && cuts.tail_cut >= 1)) {
    throw Error(ErrorKind::Parameter, "bucket cutoffs need head_cut > tail_cut >= 1");
  }
  ClassMetaMap out;
  for (const auto& [word, n] : counts) out[word] = ClassMeta{word, bucket_of(n, cuts), std::nullopt};
  return out;
}

namespace {

bool selected(const ClassFilter& filter, const std::string& word) { return !filter || filter(word); }

}  // namespace

double mean_rank(const std::vector<ScoredInstance>& scored) {
  double sum = 0;
  std::size_t count = 0;
  for (const auto& s : scored) {
    const auto ranks = s.ranks();
    for (auto p : s.instance.positives) {
      sum += static_cast<double>(ranks.at(p));
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorKind::Metric, "mean rank of an empty set");
  return sum / static_cast<double>(count);
}

double mean_recall_at_k(const std::vector<ScoredInstance>& scored, std::size_t k, const ClassFilter& filter) {
  if (k == 0) throw Error(ErrorKind::Parameter, "k must be >= 1");
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;  // hits, total
  for (const auto& s : scored) {
    const auto ranks = s.ranks();
    for (auto p : s.instance.positives) {
      const auto& word = s.instance.candidates[p];
      if (!selected(filter, word)) continue;
      auto& [hits, total] = per_class[word];
      ++total;
      if (ranks[p] <= k) ++hits;
    }
  }
  if (per_class.empty()) throw Error(ErrorKind::Metric, "mean recall without positives");
  double sum = 0;
  for (const auto& [word, ht] : per_class) sum += static_cast<double>(ht.first) / static_cast<double>(ht.second);
  return sum / static_cast<double>(per_class.size());
}

double average_precision(const std::vector<bool>& ranked_labels) {
  // extended precision so short lists round like their exact fractions
  long double sum = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked_labels.size(); ++i) {
    if (!ranked_labels[i]) continue;
    ++hits;
    sum += static_cast<long double>(hits) / static_cast<long double>(i + 1);
  }
  return hits ? static_cast<double>(sum / static_cast<long double>(hits)) : 0.0;
}

namespace {

struct Labeled {
  double loss;
  bool positive;
};

std::vector<bool> sorted_labels(std::vector<Labeled> pool) {
  std::stable_sort(pool.begin(), pool.end(), [](const Labeled& a, const Labeled& b) { return a.loss < b.loss; });
  std::vector<bool> out;
  out.reserve(pool.size());
  for (const auto& e : pool) out.push_back(e.positive);
  return out;
}

}  // namespace

ApResult mean_average_precision(const std::vector<ScoredInstance>& scored, const LabelOptions& labels,
                                MapPooling pooling, const ClassFilter& filter) {
  ApResult result;
  double sum = 0;
  if (pooling == MapPooling::PerClass) {
    std::map<std::string, std::vector<Labeled>> pools;
    for (const auto& s : scored) {
      for (std::size_t j = 0; j < s.instance.candidates.size(); ++j) {
        const auto& word = s.instance.candidates[j];
        if (!selected(filter, word)) continue;
        const Label l = s.instance.label(j, labels.unlabeled_as_negative);
        if (l == Label::Unlabeled) continue;
        pools[word].push_back({s.scores[j], l == Label::Positive});
      }
    }
    for (auto& [word, pool] : pools) {
      const auto positives = std::count_if(pool.begin(), pool.end(), [](const Labeled& e) { return e.positive; });
      if (positives == 0) continue;
      if (positives == static_cast<std::ptrdiff_t>(pool.size())) {
        result.skipped.push_back(word);
        continue;
      }
      sum += average_precision(sorted_labels(std::move(pool)));
      ++result.classes;
    }
  } else {
    for (const auto& s : scored) {
      std::vector<Labeled> pool;
      for (std::size_t j = 0; j < s.instance.candidates.size(); ++j) {
        if (!selected(filter, s.instance.candidates[j])) continue;
        const Label l = s.instance.label(j, labels.unlabeled_as_negative);
        if (l != Label::Unlabeled) pool.push_back({s.scores[j], l == Label::Positive});
      }
      const auto positives = std::count_if(pool.begin(), pool.end(), [](const Labeled& e) { return e.positive; });
      if (positives == 0) continue;
      if (positives == static_cast<std::ptrdiff_t>(pool.size())) {
        result.skipped.push_back(s.instance.image_id + "/" + s.instance.anchor);
        continue;
      }
      sum += average_precision(sorted_labels(std::move(pool)));
      ++result.classes;
    }
  }
  if (result.classes == 0) throw Error(ErrorKind::Metric, "mAP without any class having both label sides");
  result.value = sum / static_cast<double>(result.classes);
  return result;
}

double mean_balanced_accuracy(const std::vector<ScoredInstance>& scored,
                              const std::vector<std::vector<double>>& probs, double threshold,
                              const LabelOptions& labels, const ClassFilter& filter) {
  if (probs.size() != scored.size()) throw Error(ErrorKind::Argument, "probability rows do not match instances");
  struct Counts {
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  };
  std::map<std::string, Counts> per_class;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const auto& inst = scored[i].instance;
    if (probs[i].size() != inst.candidates.size()) {
      throw Error(ErrorKind::Argument, "probability row length does not match candidates");
    }
    for (std::size_t j = 0; j < inst.candidates.size(); ++j) {
      const double p = probs[i][j];
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::Argument, "probability outside [0, 1]");
      const auto& word = inst.candidates[j];
      if (!selected(filter, word)) continue;
      const Label l = inst.label(j, labels.unlabeled_as_negative);
      if (l == Label::Unlabeled) continue;
      auto& c = per_class[word];
      const bool predicted = p >= threshold;
      if (l == Label::Positive) {
        predicted ? ++c.tp : ++c.fn;
      } else {
        predicted ? ++c.fp : ++c.tn;
      }
    }
  }
  double sum = 0;
  std::size_t classes = 0;
  for (const auto& [word, c] : per_class) {
    if (c.tp + c.fn == 0 || c.tn + c.fp == 0) continue;
    const double tpr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    const double tnr = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    sum += (tpr + tnr) / 2.0;
    ++classes;
  }
  if (classes == 0) throw Error(ErrorKind::Metric, "balanced accuracy without any class having both label sides");
  return sum / static_cast<double>(classes);
}

double overall_f1_at_k(const std::vector<ScoredInstance>& scored, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::Parameter, "k must be >= 1");
  std::size_t predicted = 0, true_positive = 0, positives = 0;
  for (const auto& s : scored) {
    const auto ranks = s.ranks();
    predicted += std::min(k, s.instance.candidates.size());
    positives += s.instance.positives.size();
    for (auto p : s.instance.positives) {
      if (ranks[p] <= k) ++true_positive;
    }
  }
  if (predicted == 0 || positives == 0) throw Error(ErrorKind::Metric, "F1 of an empty set");
  const double precision = static_cast<double>(true_positive) / static_cast<double>(predicted);
  const double recall = static_cast<double>(true_positive) / static_cast<double>(positives);
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

// ---------------------------------------------------------------------------
// Report

namespace {

template <class Fn>
auto try_metric(Fn&& fn) -> std::optional<decltype(fn())> {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Metric) throw;
    return std::nullopt;
  }
}

GroupMetrics group_metrics(const std::vector<ScoredInstance>& scored, const ReportConfig& config,
                           const ClassFilter& filter) {
  GroupMetrics g;
  std::set<std::string> classes;
  for (const auto& s : scored)
    for (auto p : s.instance.positives)
      if (filter(s.instance.candidates[p])) classes.insert(s.instance.candidates[p]);
  g.classes = classes.size();
  if (auto ap = try_metric([&] { return mean_average_precision(scored, config.labels, MapPooling::PerClass, filter); })) {
    g.map = ap->value;
  }
  for (auto k : config.ks) {
    if (auto r = try_metric([&] { return mean_recall_at_k(scored, k, filter); })) g.recall_at_k[k] = *r;
  }
  return g;
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string threshold_key(double t) {
  std::ostringstream ss;
  ss << t;
  return ss.str();
}

Json group_json(const GroupMetrics& g) {
  Json r = Json::object();
  for (const auto& [k, v] : g.recall_at_k) r[std::to_string(k)] = v;
  return Json{{"classes", g.classes}, {"mAP", g.map ? Json(*g.map) : Json(nullptr)}, {"mR_at_k", r}};
}

GroupMetrics group_from_json(const Json& j) {
  GroupMetrics g;
  g.classes = j.at("classes").get<std::size_t>();
  if (!j.at("mAP").is_null()) g.map = j.at("mAP").get<double>();
  for (const auto& [k, v] : j.at("mR_at_k").items()) g.recall_at_k[std::stoul(k)] = v.get<double>();
  return g;
}

}  // namespace

MetricReport evaluate(const std::vector<ScoredInstance>& scored, const ClassMetaMap& meta,
                      const ReportConfig& config, const std::vector<std::vector<double>>* probs) {
  if (scored.empty()) throw Error(ErrorKind::Metric, "nothing to evaluate");
  MetricReport r;
  r.method = std::string(to_string(scored.front().method));
  r.template_name = scored.front().template_name;
  r.instances = scored.size();
  for (const auto& s : scored) r.positives += s.instance.positives.size();
  r.cuts = config.cuts;
  r.mean_rank = mean_rank(scored);
  for (auto k : config.ks) {
    if (auto v = try_metric([&] { return mean_recall_at_k(scored, k); })) r.recall_at_k[k] = *v;
    if (auto v = try_metric([&] { return overall_f1_at_k(scored, k); })) r.f1_at_k[k] = *v;
  }
  if (auto ap = try_metric([&] { return mean_average_precision(scored, config.labels, config.pooling); })) {
    r.map = ap->value;
    for (const auto& w : ap->skipped) r.warnings.push_back("mAP skipped '" + w + "': no labeled negatives");
  } else {
    r.warnings.push_back("mAP undefined: no class has both positives and negatives");
  }
  if (probs) {
    r.calibrated = true;
    for (double t : config.thresholds) {
      if (auto v = try_metric([&] { return mean_balanced_accuracy(scored, *probs, t, config.labels); })) {
        r.balanced_accuracy[t] = *v;
      }
    }
  }

  // Classes missing from the metadata count as Tail: the bucket map is total.
  auto bucket_for = [&](const std::string& w) {
    auto it = meta.find(w);
    return it == meta.end() ? FrequencyBucket::Tail : it->second.bucket;
  };
  for (auto b : {FrequencyBucket::Head, FrequencyBucket::Medium, FrequencyBucket::Tail}) {
    auto g = group_metrics(scored, config, [&](const std::string& w) { return bucket_for(w) == b; });
    if (g.classes) r.per_bucket[std::string(to_string(b))] = std::move(g);
  }
  std::set<AttributeType> types;
  for (const auto& [w, m] : meta)
    if (m.type) types.insert(*m.type);
  for (auto t : types) {
    auto g = group_metrics(scored, config, [&](const std::string& w) {
      auto it = meta.find(w);
      return it != meta.end() && it->second.type == t;
    });
    if (g.classes) r.per_type[std::string(to_string(t))] = std::move(g);
  }
  return r;
}

Json MetricReport::to_json() const {
  Json recall = Json::object(), f1 = Json::object(), ma = Json::object(), buckets = Json::object(),
       types = Json::object();
  for (const auto& [k, v] : recall_at_k) recall[std::to_string(k)] = v;
  for (const auto& [k, v] : f1_at_k) f1[std::to_string(k)] = v;
  for (const auto& [t, v] : balanced_accuracy) ma[threshold_key(t)] = v;
  for (const auto& [b, g] : per_bucket) buckets[b] = group_json(g);
  for (const auto& [t, g] : per_type) types[t] = group_json(g);
  return Json{{"method", method},
              {"template_name", template_name},
              {"calibrated", calibrated},
              {"instances", instances},
              {"positives", positives},
              {"mean_rank", mean_rank},
              {"mR_at_k", recall},
              {"mAP", map ? Json(*map) : Json(nullptr)},
              {"mA", ma},
              {"F1_at_k", f1},
              {"per_bucket", buckets},
              {"per_type", types},
              {"bucket_cuts", {{"head_cut", cuts.head_cut}, {"tail_cut", cuts.tail_cut}}},
              {"warnings", warnings}};
}

MetricReport MetricReport::from_json(const Json& j) {
  MetricReport r;
  try {
    r.method = j.at("method").get<std::string>();
    r.template_name = j.at("template_name").get<std::string>();
    r.calibrated = j.value("calibrated", false);
    r.instances = j.at("instances").get<std::size_t>();
    r.positives = j.at("positives").get<std::size_t>();
    r.mean_rank = j.at("mean_rank").get<double>();
    for (const auto& [k, v] : j.at("mR_at_k").items()) r.recall_at_k[std::stoul(k)] = v.get<double>();
    if (!j.at("mAP").is_null()) r.map = j.at("mAP").get<double>();
    for (const auto& [t, v] : j.at("mA").items()) r.balanced_accuracy[std::stod(t)] = v.get<double>();
    for (const auto& [k, v] : j.at("F1_at_k").items()) r.f1_at_k[std::stoul(k)] = v.get<double>();
    for (const auto& [b, g] : j.at("per_bucket").items()) r.per_bucket[b] = group_from_json(g);
    for (const auto& [t, g] : j.at("per_type").items()) r.per_type[t] = group_from_json(g);
    r.cuts.head_cut = j.at("bucket_cuts").at("head_cut").get<std::uint64_t>();
    r.cuts.tail_cut = j.at("bucket_cuts").at("tail_cut").get<std::uint64_t>();
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("metric report: ") + e.what());
  }
  return r;
}

std::string MetricReport::to_text() const {
  std::ostringstream out;
  out << "method: " << method << (calibrated ? " (calibrated)" : "") << "\n";
  out << "template: " << template_name << "\n";
  out << "instances: " << instances << "  positives: " << positives << "\n";
  out << "mean rank: " << fmt(mean_rank, 2) << "\n";
  for (const auto& [k, v] : recall_at_k) out << "mR@" << k << ": " << fmt(100 * v, 1) << "\n";
  out << "mAP: " << (map ? fmt(100 * *map, 1) : std::string("-")) << "\n";
  for (const auto& [t, v] : balanced_accuracy) out << "mA@" << threshold_key(t) << ": " << fmt(100 * v, 1) << "\n";
  for (const auto& [k, v] : f1_at_k) out << "F1@" << k << ": " << fmt(100 * v, 1) << "\n";
  out << "buckets (head >= " << cuts.head_cut << ", tail < " << cuts.tail_cut << "):\n";
  for (const auto& [b, g] : per_bucket) {
    out << "  " << b << ": classes " << g.classes << "  mAP " << (g.map ? fmt(100 * *g.map, 1) : std::string("-"));
    for (const auto& [k, v] : g.recall_at_k) out << "  mR@" << k << " " << fmt(100 * v, 1);
    out << "\n";
  }
  if (!per_type.empty()) {
    out << "attribute types:\n";
    for (const auto& [t, g] : per_type) {
      out << "  " << t << ": classes " << g.classes << "  mAP " << (g.map ? fmt(100 * *g.map, 1) : std::string("-"))
          << "\n";
    }
  }
  for (const auto& w : warnings) out << "warning: " << w << "\n";
  return out.str();
}

namespace {

std::vector<std::string> table_columns(const std::vector<MetricReport>& reports) {
  std::vector<std::string> cols;
  std::set<std::string> present;
  for (const auto& r : reports) present.insert(r.template_name);
  for (auto t : kCanonicalTemplates) {
    if (present.erase(std::string(t))) cols.emplace_back(t);
  }
  cols.insert(cols.end(), present.begin(), present.end());
  return cols;
}

std::string row_label(const MetricReport& r) {
  std::string label = r.method == "contrastive" ? "Con" : "Gen";
  if (r.calibrated) label += "+cal";
  return label;
}

std::vector<std::string> table_rows(const std::vector<MetricReport>& reports) {
  std::vector<std::string> rows;
  for (const char* fixed : {"Con", "Gen"}) rows.emplace_back(fixed);
  for (const auto& r : reports) {
    auto label = row_label(r);
    if (std::find(rows.begin(), rows.end(), label) == rows.end()) rows.push_back(label);
  }
  return rows;
}

std::optional<double> cell(const std::vector<MetricReport>& reports, const std::string& row, const std::string& col) {
  for (const auto& r : reports) {
    if (row_label(r) == row && r.template_name == col) return r.mean_rank;
  }
  return std::nullopt;
}

}  // namespace

std::string method_template_table(const std::vector<MetricReport>& reports) {
  const auto cols = table_columns(reports);
  const auto rows = table_rows(reports);
  std::vector<std::size_t> widths;
  for (const auto& c : cols) widths.push_back(std::max<std::size_t>(c.size(), 8));
  std::size_t label_width = 6;
  for (const auto& r : rows) label_width = std::max(label_width, r.size());

  std::ostringstream out;
  out << "Mean rank (lower is better)\n";
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  out << pad("", label_width);
  for (std::size_t i = 0; i < cols.size(); ++i) out << " | " << pad(cols[i], widths[i]);
  out << "\n" << std::string(label_width, '-');
  for (auto w : widths) out << "-+-" << std::string(w, '-');
  out << "\n";
  for (const auto& row : rows) {
    out << pad(row, label_width);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      auto v = cell(reports, row, cols[i]);
      out << " | " << pad(v ? fmt(*v, 1) : std::string("-"), widths[i]);
    }
    out << "\n";
  }
  return out.str();
}

Json method_template_table_json(const std::vector<MetricReport>& reports) {
  const auto cols = table_columns(reports);
  Json rows = Json::array();
  for (const auto& row : table_rows(reports)) {
    Json cells = Json::object();
    for (const auto& c : cols) {
      auto v = cell(reports, row, c);
      cells[c] = v ? Json(*v) : Json(nullptr);
    }
    rows.push_back({{"row", row}, {"mean_rank", cells}});
  }
  return Json{{"columns", cols}, {"rows", rows}};
}

}  // namespace genret
