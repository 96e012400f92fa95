#include "hprobe/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "hprobe/error.hpp"
#include "hprobe/random.hpp"

namespace hprobe {

void validate_train_config(const TrainConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError("train." + msg); };
  if (!(c.learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (c.epochs < 1) fail("epochs must be >= 1");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (c.eval_every < 0) fail("eval_every must be >= 0");
  if (c.grad_clip && !(*c.grad_clip > 0.0)) fail("grad_clip must be > 0");
  if (!(c.fpr_target > 0.0 && c.fpr_target < 1.0)) fail("fpr_target must lie in (0, 1)");
  const auto& o = c.optimizer;
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0)) fail("optimizer.beta1 must lie in [0, 1)");
  if (!(o.beta2 >= 0.0 && o.beta2 < 1.0)) fail("optimizer.beta2 must lie in [0, 1)");
  if (!(o.eps > 0.0)) fail("optimizer.eps must be > 0");
}

namespace {

std::vector<Eigen::MatrixXd> layer_states(const Dataset& ds, int layer) {
  if (!ds.has_layer(layer)) {
    throw MissingDataError("layer " + std::to_string(layer) + " not in dataset");
  }
  std::vector<Eigen::MatrixXd> out;
  out.reserve(ds.sequences.size());
  for (const auto& seq : ds.sequences) {
    auto it = seq.states.find(layer);
    if (it == seq.states.end()) {
      throw MissingDataError("sequence '" + seq.id + "' lacks layer " +
                             std::to_string(layer));
    }
    out.push_back(it->second.cast<double>());
  }
  return out;
}

Evaluation evaluate_cached(const ProbeParams& params, const Dataset& ds,
                           const std::vector<Eigen::MatrixXd>& states,
                           const LossConfig& loss_cfg, double fpr_target,
                           double threshold) {
  std::vector<Eigen::VectorXd> logits(ds.sequences.size());
  TokenScores ts;
  std::vector<LossInput> batch;
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& seq = ds.sequences[i];
    logits[i] = forward(params, states[i]);
    for (int t = 0; t < seq.num_tokens; ++t) {
      if (!seq.mask[t]) continue;
      ts.scores.push_back(clamped_sigmoid(logits[i](t)));
      ts.labels.push_back(seq.token_labels[t]);
    }
  }
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    batch.push_back({&ds.sequences[i], &logits[i]});
  }
  Evaluation ev;
  ev.metrics = compute_metrics(ts.scores, ts.labels, fpr_target, threshold);
  ev.loss = total_loss(batch, loss_cfg);
  return ev;
}

}  // namespace

TokenScores score_tokens(const ProbeParams& params, const Dataset& ds, int layer) {
  const auto states = layer_states(ds, layer);
  TokenScores ts;
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& seq = ds.sequences[i];
    const Eigen::VectorXd p = predict_proba(params, states[i]);
    for (int t = 0; t < seq.num_tokens; ++t) {
      if (!seq.mask[t]) continue;
      ts.scores.push_back(p(t));
      ts.labels.push_back(seq.token_labels[t]);
    }
  }
  return ts;
}

Evaluation evaluate(const ProbeParams& params, const Dataset& ds, int layer,
                    const LossConfig& loss_cfg, double fpr_target, double threshold) {
  return evaluate_cached(params, ds, layer_states(ds, layer), loss_cfg, fpr_target,
                         threshold);
}

TrainResult train(const ProbeParams& init, const Dataset& train_set,
                  const Dataset* validation, int layer, const LossConfig& loss_cfg,
                  const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (cfg.epochs > 0) validate_train_config(cfg);
  validate_loss_config(loss_cfg);
  if (train_set.sequences.empty()) throw MissingDataError("train: empty dataset");
  if (init.arch.input_dim() != train_set.meta.hidden_dim) {
    throw ShapeError("train: probe input width differs from dataset hidden_dim");
  }

  const Dataset& eval_set = validation != nullptr ? *validation : train_set;
  const auto train_states = layer_states(train_set, layer);
  const auto eval_states =
      validation != nullptr ? layer_states(*validation, layer) : train_states;

  TrainResult result;
  result.params = init;
  auto& params = result.params;
  auto& history = result.history;

  std::vector<double> theta = params.flatten();
  const std::size_t n_params = theta.size();
  std::vector<double> m1(n_params, 0.0), m2(n_params, 0.0);

  std::optional<ProbeParams> best;
  double best_score = -1.0;
  int step = 0;

  auto run_eval = [&]() {
    EvalRecord rec;
    rec.step = step;
    Evaluation ev = evaluate_cached(params, eval_set, eval_states, loss_cfg,
                                    cfg.fpr_target, cfg.threshold);
    rec.metrics = ev.metrics;
    rec.loss = ev.loss;
    history.evals.push_back(rec);
    if (rec.metrics.r_at_fpr > best_score) {
      best_score = rec.metrics.r_at_fpr;
      best = params;
      history.selected_step = step;
    }
  };

  std::vector<std::size_t> order(train_set.sequences.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(cfg.seed, "trainer.order");
  const std::size_t batch_size = static_cast<std::size_t>(std::max(1, cfg.batch_size));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t end = std::min(order.size(), begin + batch_size);

      std::vector<ProbePass> passes;
      passes.reserve(end - begin);
      std::vector<LossInput> batch;
      for (std::size_t k = begin; k < end; ++k) {
        passes.emplace_back(params, train_states[order[k]]);
      }
      for (std::size_t k = begin; k < end; ++k) {
        batch.push_back({&train_set.sequences[order[k]], &passes[k - begin].logits()});
      }
      std::vector<Eigen::VectorXd> dz;
      LossBreakdown loss;
      try {
        loss = total_loss(batch, loss_cfg, &dz);
      } catch (const NumericError&) {
        throw NumericError("train: non-finite loss at step " + std::to_string(step + 1));
      }
      ProbeParams grad = params.zeros_like();
      for (std::size_t k = 0; k < passes.size(); ++k) {
        passes[k].accumulate_gradient(dz[k], grad);
      }
      std::vector<double> g = grad.flatten();
      double norm = std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
      if (!std::isfinite(norm)) {
        throw NumericError("train: non-finite gradient at step " + std::to_string(step + 1));
      }
      if (cfg.grad_clip && norm > *cfg.grad_clip) {
        const double scale = *cfg.grad_clip / norm;
        for (double& v : g) v *= scale;
      }

      ++step;
      const auto& opt = cfg.optimizer;
      if (opt.kind == OptimizerKind::kAdam) {
        const double c1 = 1.0 - std::pow(opt.beta1, step);
        const double c2 = 1.0 - std::pow(opt.beta2, step);
        for (std::size_t i = 0; i < n_params; ++i) {
          m1[i] = opt.beta1 * m1[i] + (1.0 - opt.beta1) * g[i];
          m2[i] = opt.beta2 * m2[i] + (1.0 - opt.beta2) * g[i] * g[i];
          theta[i] -= cfg.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + opt.eps);
        }
      } else {
        for (std::size_t i = 0; i < n_params; ++i) theta[i] -= cfg.learning_rate * g[i];
      }
      params.assign(theta);

      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.loss = loss;
      rec.grad_norm = norm;
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      history.steps.push_back(rec);

      if (cfg.eval_every > 0 && step % cfg.eval_every == 0) run_eval();
    }
    if (cfg.eval_every == 0) run_eval();
  }

  if (cfg.select_best && best) params = *best;
  if (!cfg.select_best || !best) history.selected_step = step;
  params.round_to_float();

  EvalRecord fin;
  fin.step = history.selected_step;
  Evaluation ev = evaluate_cached(params, eval_set, eval_states, loss_cfg,
                                  cfg.fpr_target, cfg.threshold);
  fin.metrics = ev.metrics;
  fin.loss = ev.loss;
  history.final_eval = fin;
  return result;
}

}  // namespace hprobe
