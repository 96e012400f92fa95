#ifndef HPROBE_TRAINER_HPP_
#define HPROBE_TRAINER_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "hprobe/dataset.hpp"
#include "hprobe/loss.hpp"
#include "hprobe/metrics.hpp"
#include "hprobe/probe.hpp"

namespace hprobe {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double learning_rate = 2e-2;
  int epochs = 40;
  int batch_size = 8;  // sequences per step
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  std::optional<double> grad_clip = 1.0;  // global L2 norm bound
  int eval_every = 0;  // steps between evaluations; 0 = end of each epoch
  // Keep the parameters with the best validation recall@FPR.
  bool select_best = true;
  double fpr_target = 0.1;
  double threshold = 0.5;
};

// Throws ConfigError. epochs = 0 is accepted only by train() itself.
void validate_train_config(const TrainConfig& cfg);

struct StepRecord {
  int step = 0;
  int epoch = 0;
  LossBreakdown loss;
  double grad_norm = 0.0;
  double seconds = 0.0;
};

struct EvalRecord {
  int step = 0;
  MetricsReport metrics;
  LossBreakdown loss;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  // Evaluation of the returned parameters.
  std::optional<EvalRecord> final_eval;
  int selected_step = 0;
};

struct TrainResult {
  ProbeParams params;
  TrainHistory history;
};

struct TokenScores {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

// Probabilities and labels of every unmasked token at `layer`.
TokenScores score_tokens(const ProbeParams& params, const Dataset& ds, int layer);

struct Evaluation {
  MetricsReport metrics;
  LossBreakdown loss;
};

Evaluation evaluate(const ProbeParams& params, const Dataset& ds, int layer,
                    const LossConfig& loss_cfg, double fpr_target = 0.1,
                    double threshold = 0.5);

// Mini-batch training of the probe head only; the dataset is read-only.
// `validation` drives model selection and may be null (train set is used).
// Returned parameters are rounded to f32. Throws MissingDataError when the
// layer is absent and NumericError (naming the step) on a non-finite loss.
TrainResult train(const ProbeParams& init, const Dataset& train_set,
                  const Dataset* validation, int layer, const LossConfig& loss_cfg,
                  const TrainConfig& cfg);

}  // namespace hprobe

#endif  // HPROBE_TRAINER_HPP_
