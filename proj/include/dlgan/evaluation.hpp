#pragma once

// Post-hoc metrics on normalized windows (each T x M, values in [0, 1]).

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlgan/autodiff.hpp"

namespace dlgan {

struct PosthocOptions {
  long hidden = 0;  // 0 -> max(8, 2M)
  int layers = 2;
  long epochs = 20;
  long batch_size = 64;
  long iterations = 0;  // optimizer steps; 0 -> `epochs` passes over the training split
  double lr = 1e-3;
  double train_fraction = 0.8;
  std::size_t min_windows = 20;
};

// |held-out accuracy - 0.5| of a recurrent real-vs-synthetic classifier.
double discriminative_score(const std::vector<Matrix>& real, const std::vector<Matrix>& synth, std::uint64_t seed,
                            const PosthocOptions& opt = {});

// Accuracy behind the score, for reporting.
double discriminative_accuracy(const std::vector<Matrix>& real, const std::vector<Matrix>& synth,
                               std::uint64_t seed, const PosthocOptions& opt = {});

struct PredictiveResult {
  double tstr = 0;  // trained on synthetic, tested on held-out real
  double trtr = 0;  // trained on the real training split, same test split
};

// One-step-ahead mean absolute error over all features.
double predictive_score(const std::vector<Matrix>& real, const std::vector<Matrix>& synth, std::uint64_t seed,
                        const PosthocOptions& opt = {});
PredictiveResult predictive_scores(const std::vector<Matrix>& real, const std::vector<Matrix>& synth,
                                   std::uint64_t seed, const PosthocOptions& opt = {});

// Trains a one-step predictor on `train`, returns its MAE on `test`.
double one_step_mae(const std::vector<Matrix>& train, const std::vector<Matrix>& test, std::uint64_t seed,
                    const PosthocOptions& opt = {});

struct ScoreSummary {
  std::vector<double> values;
  double mean = 0;
  double std = 0;  // population standard deviation

  static ScoreSummary of(std::vector<double> values);
  nlohmann::json to_json() const;
};

struct MetricsReport {
  std::string dataset;
  std::string ablation = "none";
  std::uint64_t seed = 0;
  std::size_t real_windows = 0;
  std::size_t synth_windows = 0;
  ScoreSummary discriminative;
  ScoreSummary predictive;  // TSTR
  ScoreSummary trtr;
  std::string tsne_path;
  std::string error_unit = "normalized";

  nlohmann::json to_json() const;
  void save(const std::string& path) const;
};

struct EvaluateOptions {
  int metric_seeds = 5;
  PosthocOptions posthoc;
  bool discriminative = true;
  bool predictive = true;
};

// Runs both scores over `metric_seeds` seeds derived from `seed`.
MetricsReport evaluate(const std::vector<Matrix>& real, const std::vector<Matrix>& synth, std::uint64_t seed,
                       const EvaluateOptions& opt = {});

}  // namespace dlgan
