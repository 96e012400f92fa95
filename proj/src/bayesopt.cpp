#include "hprobe/bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hprobe/error.hpp"
#include "hprobe/random.hpp"

namespace hprobe {

std::string_view to_string(Acquisition a) { return a == Acquisition::kEi ? "ei" : "ucb"; }

Acquisition acquisition_from_string(std::string_view s) {
  if (s == "ei") return Acquisition::kEi;
  if (s == "ucb") return Acquisition::kUcb;
  throw ConfigError("bo.acquisition must be 'ei' or 'ucb', got '" + std::string(s) + "'");
}

void validate_bo_config(const BOConfig& cfg) {
  if (cfg.n_init < 1) throw ConfigError("bo.n_init must be >= 1");
  if (cfg.iterations < 1) throw ConfigError("bo.iterations must be >= 1");
  if (!(cfg.ucb_delta > 0.0 && cfg.ucb_delta < 1.0)) {
    throw ConfigError("bo.ucb_delta must lie in (0, 1)");
  }
  for (int l : cfg.candidate_layers) {
    if (l < 1) throw ConfigError("bo.candidate_layers entries must be >= 1");
  }
  validate_gp_hyper(cfg.gp);
  validate_layer_model_params(cfg.model);
}

// ---- evaluators ------------------------------------------------------------

SyntheticLayerOracle::SyntheticLayerOracle(SyntheticOracleConfig cfg) : cfg_(cfg) {
  if (cfg_.num_layers < 1) throw ConfigError("oracle.num_layers must be >= 1");
  if (cfg_.peak < 1 || cfg_.peak > cfg_.num_layers) {
    throw ConfigError("oracle.peak must lie in [1, num_layers]");
  }
  if (!(cfg_.width > 0.0)) throw ConfigError("oracle.width must be > 0");
  cfg_.model.num_layers = cfg_.num_layers;
  validate_layer_model_params(cfg_.model);
}

std::vector<int> SyntheticLayerOracle::layers() const {
  std::vector<int> out(cfg_.num_layers);
  for (int i = 0; i < cfg_.num_layers; ++i) out[i] = i + 1;
  return out;
}

double SyntheticLayerOracle::separability(int layer) const {
  const double d = (layer - cfg_.peak) / cfg_.width;
  return cfg_.max_separability * std::exp(-0.5 * d * d);
}

LayerEvaluation SyntheticLayerOracle::evaluate(int layer) {
  if (layer < 1 || layer > cfg_.num_layers) {
    throw MissingDataError("oracle has no layer " + std::to_string(layer));
  }
  const double s = separability(layer);
  return {performance_model(layer, s, cfg_.model), s};
}

LayerProfile SyntheticLayerOracle::full_profile() const {
  std::vector<double> s(cfg_.num_layers);
  for (int l = 1; l <= cfg_.num_layers; ++l) s[l - 1] = separability(l);
  return model_profile(s, cfg_.model);
}

std::map<int, double> SyntheticLayerOracle::utilities() const {
  std::map<int, double> out;
  for (const auto& r : full_profile().records) out[r.layer] = r.utility;
  return out;
}

DatasetLayerEvaluator::DatasetLayerEvaluator(const Dataset& train, const Dataset& validation,
                                             ProbeArch arch, LossConfig loss_cfg,
                                             TrainConfig train_cfg)
    : train_(train),
      validation_(validation),
      arch_(std::move(arch)),
      loss_cfg_(loss_cfg),
      train_cfg_(train_cfg) {
  validate_arch(arch_);
  validate_loss_config(loss_cfg_);
  validate_train_config(train_cfg_);
}

int DatasetLayerEvaluator::num_layers() const { return train_.meta.num_layers; }

std::vector<int> DatasetLayerEvaluator::layers() const { return train_.meta.layers; }

LayerEvaluation DatasetLayerEvaluator::evaluate(int layer) {
  if (auto it = cache_.find(layer); it != cache_.end()) return it->second;
  const ProbeParams init = init_probe(arch_, substream_seed(train_cfg_.seed, "bayesopt.probe"));
  const TrainResult result =
      train(init, train_, &validation_, layer, loss_cfg_, train_cfg_);
  const Evaluation ev = evaluate_probe(result.params, layer);
  LayerEvaluation out{ev.metrics.r_at_fpr, estimate_separability(train_, layer)};
  cache_.emplace(layer, out);
  return out;
}

Evaluation DatasetLayerEvaluator::evaluate_probe(const ProbeParams& params, int layer) const {
  return hprobe::evaluate(params, validation_, layer, loss_cfg_, train_cfg_.fpr_target,
                          train_cfg_.threshold);
}

// ---- search ----------------------------------------------------------------

namespace {

class SearchState {
 public:
  SearchState(LayerEvaluator& evaluator, const BOConfig& cfg)
      : evaluator_(evaluator), cfg_(cfg), gp_(cfg.gp, evaluator.num_layers()) {
    validate_bo_config(cfg);
    model_ = cfg.model;
    model_.num_layers = evaluator.num_layers();
    const auto available = evaluator.layers();
    const std::set<int> have(available.begin(), available.end());
    std::set<int> cand;
    if (cfg.candidate_layers.empty()) {
      cand = have;
    } else {
      for (int l : cfg.candidate_layers) {
        if (!have.count(l)) {
          throw MissingDataError("candidate layer " + std::to_string(l) + " not available");
        }
        cand.insert(l);
      }
    }
    if (cand.empty()) throw MissingDataError("no candidate layers");
    candidates_.assign(cand.begin(), cand.end());
  }

  const std::vector<int>& candidates() const { return candidates_; }
  bool failed() const { return trace_.error.has_value(); }
  bool evaluated(int layer) const { return records_.count(layer) > 0; }
  std::size_t num_evaluated() const { return records_.size(); }

  // Returns false when the evaluation failed; the trace then stops.
  bool record(int layer, bool initial, std::optional<double> acq) {
    LayerEvaluation e;
    try {
      e = evaluator_.evaluate(layer);
    } catch (const Error& ex) {
      trace_.error = "layer " + std::to_string(layer) + ": " + ex.what();
      trace_.numeric_failure = dynamic_cast<const NumericError*>(&ex) != nullptr;
      return false;
    }
    LayerRecord r;
    r.layer = layer;
    r.separability = e.separability;
    r.perf_model = performance_model(layer, e.separability, model_);
    r.perf_empirical = e.performance;
    r.lm_loss = lm_loss_model(layer, model_, e.separability);
    records_[layer] = r;
    const LayerProfile profile = normalized();

    BOStep step;
    step.t = static_cast<int>(trace_.steps.size()) + 1;
    step.layer = layer;
    step.initial = initial;
    step.performance = e.performance;
    step.separability = e.separability;
    step.lm_loss = r.lm_loss;
    step.utility = utility_of(profile, layer);
    step.acquisition_value = acq;
    trace_.steps.push_back(step);

    std::vector<GpObservation> obs;
    for (const auto& s : trace_.steps) obs.push_back({s.layer, utility_of(profile, s.layer)});
    gp_.fit(std::move(obs));
    if (cfg_.refresh_hyper && trace_.steps.size() % 3 == 0) refresh_hyper(gp_);
    return true;
  }

  // Highest acquisition value over the eligible candidates; ties go to the
  // smaller layer. nullopt when nothing is eligible.
  std::optional<std::pair<int, double>> propose() const {
    const LayerProfile profile = normalized();
    double incumbent = -std::numeric_limits<double>::infinity();
    for (const auto& r : profile.records) incumbent = std::max(incumbent, r.utility);
    const int t = static_cast<int>(trace_.steps.size()) + 1;
    const double beta =
        ucb_beta(static_cast<int>(candidates_.size()), t, cfg_.ucb_delta);
    std::optional<std::pair<int, double>> best;
    for (int l : candidates_) {
      if (!cfg_.allow_repeats && evaluated(l)) continue;
      const GpPrediction p = gp_.predict(l);
      const double a = cfg_.acquisition == Acquisition::kEi ? expected_improvement(p, incumbent)
                                                            : ucb(p, beta);
      if (!best || a > best->second) best = std::make_pair(l, a);
    }
    return best;
  }

  BOTrace finish() {
    if (records_.empty()) return std::move(trace_);
    LayerProfile profile = normalized();
    trace_.profile = profile;
    trace_.best_layer = best_layer(profile);
    int inc_layer = 0;
    double inc_u = -std::numeric_limits<double>::infinity();
    for (auto& s : trace_.steps) {
      const double u = utility_of(profile, s.layer);
      if (u > inc_u || (u == inc_u && s.layer < inc_layer)) {
        inc_u = u;
        inc_layer = s.layer;
      }
      s.incumbent_layer = inc_layer;
      s.incumbent_utility = inc_u;
    }
    return std::move(trace_);
  }

 private:
  LayerProfile normalized() const {
    LayerProfile p;
    for (const auto& [l, r] : records_) p.records.push_back(r);
    return normalize_and_utility(std::move(p), model_.w);
  }

  static double utility_of(const LayerProfile& p, int layer) {
    for (const auto& r : p.records) {
      if (r.layer == layer) return r.utility;
    }
    throw MissingDataError("layer " + std::to_string(layer) + " not in profile");
  }

  LayerEvaluator& evaluator_;
  const BOConfig& cfg_;
  LayerModelParams model_;
  GaussianProcess gp_;
  std::vector<int> candidates_;
  std::map<int, LayerRecord> records_;
  BOTrace trace_;
};

}  // namespace

BOTrace run_search(LayerEvaluator& evaluator, const BOConfig& cfg) {
  SearchState state(evaluator, cfg);
  std::vector<int> order = state.candidates();
  Rng rng = make_rng(cfg.seed, "bayesopt.init");
  std::shuffle(order.begin(), order.end(), rng);
  const int n_init = std::min<int>(cfg.n_init, static_cast<int>(order.size()));
  for (int i = 0; i < n_init; ++i) {
    if (!state.record(order[i], true, std::nullopt)) return state.finish();
  }
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto next = state.propose();
    if (!next) break;
    if (!state.record(next->first, false, next->second)) break;
  }
  return state.finish();
}

BOTrace run_search(const Dataset& ds, const BOConfig& cfg, const ProbeArch& arch,
                   const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                   double validation_fraction) {
  auto [train_set, validation] =
      split(ds, 1.0 - validation_fraction, substream_seed(cfg.seed, "bayesopt.split"));
  DatasetLayerEvaluator evaluator(train_set, validation, arch, loss_cfg, train_cfg);
  return run_search(evaluator, cfg);
}

BOTrace random_search(LayerEvaluator& evaluator, const BOConfig& cfg, int budget) {
  if (budget < 1) throw ConfigError("random_search: budget must be >= 1");
  SearchState state(evaluator, cfg);
  std::vector<int> order = state.candidates();
  Rng rng = make_rng(cfg.seed, "bayesopt.random");
  std::shuffle(order.begin(), order.end(), rng);
  const int n = std::min<int>(budget, static_cast<int>(order.size()));
  for (int i = 0; i < n; ++i) {
    if (!state.record(order[i], true, std::nullopt)) break;
  }
  return state.finish();
}

Regret compute_regret(const BOTrace& trace, const std::map<int, double>& oracle_utility) {
  if (oracle_utility.empty()) throw MissingDataError("compute_regret: empty oracle");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [l, u] : oracle_utility) best = std::max(best, u);
  Regret out;
  double cum = 0.0;
  double simple = std::numeric_limits<double>::infinity();
  for (const auto& s : trace.steps) {
    auto it = oracle_utility.find(s.layer);
    if (it == oracle_utility.end()) {
      throw MissingDataError("compute_regret: oracle has no layer " + std::to_string(s.layer));
    }
    const double r = best - it->second;
    cum += r;
    simple = std::min(simple, r);
    out.instantaneous.push_back(r);
    out.cumulative.push_back(cum);
    out.simple.push_back(simple);
  }
  return out;
}

}  // namespace hprobe
