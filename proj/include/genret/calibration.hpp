#pragma once

// Per-class calibration of retrieval losses:
//   p_c = sigmoid(-(L - mu_c) / sigma_c)
// fitted by gradient descent on binary cross-entropy over (mu_c, log sigma_c).

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "genret/io.hpp"
#include "genret/metrics.hpp"
#include "genret/types.hpp"

namespace genret {

inline constexpr double kInitialMu = -15.0;
inline constexpr double kInitialSigma = 0.5;

// Throws Error(Parameter) for sigma <= 0.
double calibrated_prob(double loss, double mu, double sigma);

// -(loss - mu) / sigma, the argument of the sigmoid.
double calibrated_logit(double loss, double mu, double sigma);

class CalibrationTable {
 public:
  CalibrationTable() = default;

  // Every class at (mu, sigma); classes are sorted and deduplicated.
  static CalibrationTable uniform(std::vector<std::string> classes, double mu = kInitialMu,
                                  double sigma = kInitialSigma);

  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return classes_.size(); }
  std::optional<std::size_t> find(const std::string& cls) const;

  double mu(std::size_t i) const { return mu_.at(i); }
  double sigma(std::size_t i) const;
  double log_sigma(std::size_t i) const { return log_sigma_.at(i); }
  void set(std::size_t i, double mu, double log_sigma);

  // Serialized as {class: {mu, sigma}}.
  Json to_json() const;
  static CalibrationTable from_json(const Json& j);

  bool operator==(const CalibrationTable&) const = default;

 private:
  std::vector<std::string> classes_;
  std::vector<double> mu_;
  std::vector<double> log_sigma_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct CalibrationExample {
  std::string cls;
  double loss = 0;
  bool positive = false;
};

// One example per labeled candidate; scores are used as losses.
std::vector<CalibrationExample> calibration_examples(const std::vector<ScoredInstance>& scored,
                                                     const LabelOptions& labels = {});

struct FitConfig {
  double learning_rate = 1e-5;  // decayed linearly to zero over `steps`
  std::size_t steps = 100000;
  std::size_t batch_size = 4;
  double weight_decay = 0.01;   // L2 pull towards the initial parameters
  std::size_t max_text_length = 16;  // recorded for parity; sentences are short
  double init_mu = kInitialMu;
  double init_sigma = kInitialSigma;
  std::uint64_t seed = 0;
  std::size_t curve_every = 0;  // 0: once per epoch

  Json to_json() const;
  static FitConfig from_json(const Json& j);
};

struct CurvePoint {
  std::size_t step = 0;
  double train_loss = 0;
  std::optional<double> validation_loss;
};

struct FitResult {
  CalibrationTable table;
  std::vector<CurvePoint> curve;
};

// Mean binary cross-entropy plus the weight-decay penalty.
double calibration_objective(const CalibrationTable& table, const std::vector<CalibrationExample>& examples,
                             const FitConfig& config);

struct CalibrationGradient {
  std::vector<double> mu;
  std::vector<double> log_sigma;
};

// Analytic gradient of calibration_objective.
CalibrationGradient calibration_gradient(const CalibrationTable& table,
                                         const std::vector<CalibrationExample>& examples,
                                         const FitConfig& config);

// Deterministic given config. Throws Error(Optimization) naming the step at
// which the objective or a parameter became non-finite, and Error(Argument)
// for an empty training set.
FitResult fit(const std::vector<CalibrationExample>& train, const FitConfig& config,
              const std::vector<CalibrationExample>* validation = nullptr);

// probs[i][j] = calibrated_prob of candidate j of instance i. Throws
// Error(Coverage) listing candidate classes missing from the table.
std::vector<std::vector<double>> apply(const CalibrationTable& table, const std::vector<ScoredInstance>& scored);

// Copies of `scored` whose scores are -(logit), i.e. (L - mu_c) / sigma_c, so
// rank metrics order candidates by calibrated probability.
std::vector<ScoredInstance> calibrated_scores(const CalibrationTable& table,
                                              const std::vector<ScoredInstance>& scored);

std::string curve_csv(const std::vector<CurvePoint>& curve);

}  // namespace genret
