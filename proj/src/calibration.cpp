#include "genret/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "genret/error.hpp"
#include "genret/random.hpp"

namespace genret {

double calibrated_logit(double loss, double mu, double sigma) {
  if (!(sigma > 0)) throw Error(ErrorKind::Parameter, "sigma must be positive");
  return -(loss - mu) / sigma;
}

double calibrated_prob(double loss, double mu, double sigma) {
  const double z = calibrated_logit(loss, mu, sigma);
  // Evaluate on the side that cannot overflow.
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

CalibrationTable CalibrationTable::uniform(std::vector<std::string> classes, double mu, double sigma) {
  if (!(sigma > 0)) throw Error(ErrorKind::Parameter, "sigma must be positive");
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  CalibrationTable t;
  t.classes_ = std::move(classes);
  t.mu_.assign(t.classes_.size(), mu);
  t.log_sigma_.assign(t.classes_.size(), std::log(sigma));
  for (std::size_t i = 0; i < t.classes_.size(); ++i) t.index_[t.classes_[i]] = i;
  return t;
}

std::optional<std::size_t> CalibrationTable::find(const std::string& cls) const {
  auto it = index_.find(cls);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double CalibrationTable::sigma(std::size_t i) const { return std::exp(log_sigma_.at(i)); }

void CalibrationTable::set(std::size_t i, double mu, double log_sigma) {
  mu_.at(i) = mu;
  log_sigma_.at(i) = log_sigma;
}

Json CalibrationTable::to_json() const {
  Json j = Json::object();
  for (std::size_t i = 0; i < classes_.size(); ++i) j[classes_[i]] = {{"mu", mu_[i]}, {"sigma", sigma(i)}};
  return j;
}

CalibrationTable CalibrationTable::from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Schema, "calibration table must be an object");
  std::vector<std::string> classes;
  for (const auto& [cls, v] : j.items()) classes.push_back(cls);
  auto t = uniform(classes);
  try {
    for (const auto& [cls, v] : j.items()) {
      const double sigma = v.at("sigma").get<double>();
      if (!(sigma > 0)) throw Error(ErrorKind::Parameter, "class '" + cls + "' has non-positive sigma");
      t.set(*t.find(cls), v.at("mu").get<double>(), std::log(sigma));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("calibration table: ") + e.what());
  }
  return t;
}

std::vector<CalibrationExample> calibration_examples(const std::vector<ScoredInstance>& scored,
                                                     const LabelOptions& labels) {
  std::vector<CalibrationExample> out;
  for (const auto& s : scored) {
    for (std::size_t j = 0; j < s.instance.candidates.size(); ++j) {
      const Label l = s.instance.label(j, labels.unlabeled_as_negative);
      if (l == Label::Unlabeled) continue;
      out.push_back({s.instance.candidates[j], s.scores[j], l == Label::Positive});
    }
  }
  return out;
}

Json FitConfig::to_json() const {
  return Json{{"learning_rate", learning_rate}, {"steps", steps},         {"batch_size", batch_size},
              {"weight_decay", weight_decay},   {"max_text_length", max_text_length},
              {"init_mu", init_mu},             {"init_sigma", init_sigma}, {"seed", seed},
              {"curve_every", curve_every}};
}

FitConfig FitConfig::from_json(const Json& j) {
  FitConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.max_text_length = j.value("max_text_length", c.max_text_length);
  c.init_mu = j.value("init_mu", c.init_mu);
  c.init_sigma = j.value("init_sigma", c.init_sigma);
  c.seed = j.value("seed", c.seed);
  c.curve_every = j.value("curve_every", c.curve_every);
  return c;
}

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::size_t class_index(const CalibrationTable& table, const std::string& cls) {
  auto i = table.find(cls);
  if (!i) throw Error(ErrorKind::Coverage, "class '" + cls + "' missing from calibration table");
  return *i;
}

double penalty(const CalibrationTable& table, const FitConfig& config) {
  const double log_sigma0 = std::log(config.init_sigma);
  double sum = 0;
  for (std::size_t c = 0; c < table.size(); ++c) {
    const double dm = table.mu(c) - config.init_mu;
    const double ds = table.log_sigma(c) - log_sigma0;
    sum += dm * dm + ds * ds;
  }
  return 0.5 * config.weight_decay * sum;
}

// Accumulates the BCE gradient of examples[first..last) in index order.
template <class Indices>
double accumulate_batch(const CalibrationTable& table, const std::vector<CalibrationExample>& examples,
                        const Indices& indices, CalibrationGradient* grad) {
  double total = 0;
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  for (auto idx : indices) {
    const auto& ex = examples[idx];
    const std::size_t c = class_index(table, ex.cls);
    const double sigma = table.sigma(c);
    const double z = -(ex.loss - table.mu(c)) / sigma;
    const double y = ex.positive ? 1.0 : 0.0;
    total += softplus(z) - y * z;
    if (grad) {
      const double dz = (sigmoid(z) - y) * inv_n;
      grad->mu[c] += dz / sigma;
      grad->log_sigma[c] += dz * -z;
    }
  }
  return total * inv_n;
}

void add_penalty_gradient(const CalibrationTable& table, const FitConfig& config, CalibrationGradient& grad) {
  const double log_sigma0 = std::log(config.init_sigma);
  for (std::size_t c = 0; c < table.size(); ++c) {
    grad.mu[c] += config.weight_decay * (table.mu(c) - config.init_mu);
    grad.log_sigma[c] += config.weight_decay * (table.log_sigma(c) - log_sigma0);
  }
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

double calibration_objective(const CalibrationTable& table, const std::vector<CalibrationExample>& examples,
                             const FitConfig& config) {
  if (examples.empty()) throw Error(ErrorKind::Argument, "no calibration examples");
  return accumulate_batch(table, examples, all_indices(examples.size()), nullptr) + penalty(table, config);
}

CalibrationGradient calibration_gradient(const CalibrationTable& table,
                                         const std::vector<CalibrationExample>& examples,
                                         const FitConfig& config) {
  if (examples.empty()) throw Error(ErrorKind::Argument, "no calibration examples");
  CalibrationGradient grad{std::vector<double>(table.size(), 0.0), std::vector<double>(table.size(), 0.0)};
  accumulate_batch(table, examples, all_indices(examples.size()), &grad);
  add_penalty_gradient(table, config, grad);
  return grad;
}

FitResult fit(const std::vector<CalibrationExample>& train, const FitConfig& config,
              const std::vector<CalibrationExample>* validation) {
  if (train.empty()) throw Error(ErrorKind::Argument, "no calibration examples");
  if (config.batch_size == 0) throw Error(ErrorKind::Parameter, "batch_size must be positive");
  if (!(config.init_sigma > 0)) throw Error(ErrorKind::Parameter, "init_sigma must be positive");
  std::vector<std::string> classes;
  for (const auto& ex : train) classes.push_back(ex.cls);

  FitResult result;
  result.table = CalibrationTable::uniform(classes, config.init_mu, config.init_sigma);
  auto& table = result.table;

  const std::size_t n = train.size();
  const std::size_t batch = std::min(config.batch_size, n);
  const std::size_t batches_per_epoch = (n + batch - 1) / batch;
  const std::size_t every = config.curve_every ? config.curve_every : batches_per_epoch;

  auto record = [&](std::size_t step) {
    CurvePoint pt{step, calibration_objective(table, train, config), std::nullopt};
    if (validation && !validation->empty()) pt.validation_loss = calibration_objective(table, *validation, config);
    if (!std::isfinite(pt.train_loss)) {
      throw Error(ErrorKind::Optimization, "objective diverged at step " + std::to_string(step));
    }
    result.curve.push_back(pt);
  };
  record(0);

  Rng rng(mix_seed(config.seed, 0xca11b4a7eULL));
  std::vector<std::size_t> order = all_indices(n);
  std::size_t cursor = n;  // forces a shuffle before the first batch
  std::vector<std::size_t> indices;
  CalibrationGradient grad;
  for (std::size_t step = 0; step < config.steps; ++step) {
    indices.clear();
    while (indices.size() < batch) {
      if (cursor == n) {
        if (batch < n) rng.shuffle(order);
        cursor = 0;
      }
      indices.push_back(order[cursor++]);
    }
    grad.mu.assign(table.size(), 0.0);
    grad.log_sigma.assign(table.size(), 0.0);
    accumulate_batch(table, train, indices, &grad);
    add_penalty_gradient(table, config, grad);

    const double lr = config.learning_rate * (1.0 - static_cast<double>(step) / static_cast<double>(config.steps));
    for (std::size_t c = 0; c < table.size(); ++c) {
      const double mu = table.mu(c) - lr * grad.mu[c];
      const double ls = table.log_sigma(c) - lr * grad.log_sigma[c];
      if (!std::isfinite(mu) || !std::isfinite(ls)) {
        throw Error(ErrorKind::Optimization, "parameters diverged at step " + std::to_string(step + 1));
      }
      table.set(c, mu, ls);
    }
    if ((step + 1) % every == 0 || step + 1 == config.steps) record(step + 1);
  }
  return result;
}

std::vector<std::vector<double>> apply(const CalibrationTable& table, const std::vector<ScoredInstance>& scored) {
  std::set<std::string> missing;
  for (const auto& s : scored)
    for (const auto& c : s.instance.candidates)
      if (!table.find(c)) missing.insert(c);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorKind::Coverage, "calibration table lacks classes: " + list);
  }
  std::vector<std::vector<double>> probs;
  probs.reserve(scored.size());
  for (const auto& s : scored) {
    auto& row = probs.emplace_back();
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      const std::size_t c = *table.find(s.instance.candidates[j]);
      row.push_back(calibrated_prob(s.scores[j], table.mu(c), table.sigma(c)));
    }
  }
  return probs;
}

std::vector<ScoredInstance> calibrated_scores(const CalibrationTable& table, const std::vector<ScoredInstance>& scored) {
  apply(table, scored);  // coverage check
  std::vector<ScoredInstance> out = scored;
  for (auto& s : out) {
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      const std::size_t c = *table.find(s.instance.candidates[j]);
      s.scores[j] = -calibrated_logit(s.scores[j], table.mu(c), table.sigma(c));
    }
  }
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "step,train_loss,validation_loss\n";
  char buf[128];
  for (const auto& p : curve) {
    if (p.validation_loss) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", p.step, p.train_loss, *p.validation_loss);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,\n", p.step, p.train_loss);
    }
    out += buf;
  }
  return out;
}

}  // namespace genret
