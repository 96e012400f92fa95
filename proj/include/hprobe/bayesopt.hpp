#ifndef HPROBE_BAYESOPT_HPP_
#define HPROBE_BAYESOPT_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hprobe/dataset.hpp"
#include "hprobe/gp.hpp"
#include "hprobe/layer_model.hpp"
#include "hprobe/loss.hpp"
#include "hprobe/probe.hpp"
#include "hprobe/trainer.hpp"

namespace hprobe {

enum class Acquisition { kEi, kUcb };

std::string_view to_string(Acquisition a);
Acquisition acquisition_from_string(std::string_view s);

struct BOConfig {
  std::vector<int> candidate_layers;  // empty = every layer the evaluator has
  int n_init = 3;
  int iterations = 5;
  Acquisition acquisition = Acquisition::kEi;
  double ucb_delta = 0.1;
  std::uint64_t seed = 0;
  GpHyper gp;
  bool refresh_hyper = false;  // grid refresh every 3 observations
  // Lets the acquisition revisit evaluated layers; the evaluation is reused.
  bool allow_repeats = false;
  LayerModelParams model;
};

void validate_bo_config(const BOConfig& cfg);

struct LayerEvaluation {
  double performance = 0.0;
  double separability = 0.0;
};

class LayerEvaluator {
 public:
  virtual ~LayerEvaluator() = default;
  virtual int num_layers() const = 0;
  virtual std::vector<int> layers() const = 0;
  virtual LayerEvaluation evaluate(int layer) = 0;
};

struct SyntheticOracleConfig {
  int num_layers = 32;
  int peak = 22;
  double width = 5.0;
  double max_separability = 2.0;
  LayerModelParams model;
};

// Separability is a Gaussian bump over layers; performance follows the
// response model, so the utility optimum is known in closed form.
class SyntheticLayerOracle : public LayerEvaluator {
 public:
  explicit SyntheticLayerOracle(SyntheticOracleConfig cfg);
  int num_layers() const override { return cfg_.num_layers; }
  std::vector<int> layers() const override;
  LayerEvaluation evaluate(int layer) override;

  double separability(int layer) const;
  // Profile over every layer, normalized over all of them.
  LayerProfile full_profile() const;
  std::map<int, double> utilities() const;

 private:
  SyntheticOracleConfig cfg_;
};

// Trains a probe per layer on `train` and scores recall@FPR on
// `validation`. Results are memoized.
class DatasetLayerEvaluator : public LayerEvaluator {
 public:
  DatasetLayerEvaluator(const Dataset& train, const Dataset& validation, ProbeArch arch,
                        LossConfig loss_cfg, TrainConfig train_cfg);
  int num_layers() const override;
  std::vector<int> layers() const override;
  LayerEvaluation evaluate(int layer) override;

 private:
  Evaluation evaluate_probe(const ProbeParams& params, int layer) const;

  const Dataset& train_;
  const Dataset& validation_;
  ProbeArch arch_;
  LossConfig loss_cfg_;
  TrainConfig train_cfg_;
  std::map<int, LayerEvaluation> cache_;
};

struct BOStep {
  int t = 0;  // 1-based evaluation index
  int layer = 0;
  bool initial = false;
  double performance = 0.0;
  double separability = 0.0;
  double lm_loss = 0.0;
  double utility = 0.0;  // as normalized right after this evaluation
  std::optional<double> acquisition_value;
  int incumbent_layer = 0;
  double incumbent_utility = 0.0;  // under the final normalization
};

struct BOTrace {
  std::vector<BOStep> steps;
  LayerProfile profile;  // evaluated layers, final normalization
  int best_layer = 0;
  std::optional<std::string> error;  // set when an evaluation failed
  bool numeric_failure = false;       // the failure was a NumericError
};

BOTrace run_search(LayerEvaluator& evaluator, const BOConfig& cfg);

// Dataset-backed search: splits with train_cfg.seed-derived streams and
// evaluates probes of `arch` per candidate layer.
BOTrace run_search(const Dataset& ds, const BOConfig& cfg, const ProbeArch& arch,
                   const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                   double validation_fraction);

// Uniform draws without replacement, same evaluation bookkeeping.
BOTrace random_search(LayerEvaluator& evaluator, const BOConfig& cfg, int budget);

struct Regret {
  std::vector<double> instantaneous;
  std::vector<double> cumulative;  // R_t
  std::vector<double> simple;      // r_t
};

// Throws MissingDataError when the oracle lacks an evaluated layer.
Regret compute_regret(const BOTrace& trace, const std::map<int, double>& oracle_utility);

}  // namespace hprobe

#endif  // HPROBE_BAYESOPT_HPP_
