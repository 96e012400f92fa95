#include "hprobe/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hprobe/ablation.hpp"
#include "hprobe/bayesopt.hpp"
#include "hprobe/checkpoint.hpp"
#include "hprobe/config.hpp"
#include "hprobe/dataset_io.hpp"
#include "hprobe/error.hpp"
#include "hprobe/random.hpp"
#include "hprobe/synthetic.hpp"

namespace hprobe {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string dataset;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

RunConfig load_run_config(const Options& o) {
  Json j = o.config.empty() ? Json::object() : load_json_file(o.config);
  for (const auto& a : o.overrides) apply_override(j, a);
  if (o.seed) j["seed"] = *o.seed;
  RunConfig cfg = run_config_from_json(j);
  validate_run_config(cfg);
  return cfg;
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(o.out);
  return o.out;
}

void write_resolved(const fs::path& dir, const RunConfig& cfg) {
  write_text_file(dir / "resolved_config.json", to_json(cfg).dump(2) + "\n");
}

Dataset load_checked(const Options& o) {
  if (o.dataset.empty()) throw MissingDataError("--dataset is required");
  if (!fs::exists(fs::path(o.dataset) / "manifest.json")) {
    throw MissingDataError("no dataset at '" + o.dataset + "'");
  }
  Dataset ds = load_dataset(o.dataset);
  const auto violations = validate(ds);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw ConfigError("invalid dataset: sequence '" + v.sequence_id + "' " + v.field + ": " +
                      v.message);
  }
  return ds;
}

int probe_layer(const RunConfig& cfg, const Dataset& ds) {
  const int layer =
      cfg.probe.layer > 0 ? cfg.probe.layer : default_probe_layer(ds.meta.num_layers);
  if (!ds.has_layer(layer)) {
    throw MissingDataError("layer " + std::to_string(layer) + " not in dataset");
  }
  return layer;
}

std::pair<Dataset, Dataset> split_for(const RunConfig& cfg, const Dataset& ds) {
  return split(ds, 1.0 - cfg.validation_fraction, substream_seed(cfg.seed, "split"));
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

void print_metrics_table(std::ostream& out,
                         const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  out << std::left << std::setw(14) << "Method" << std::right << std::setw(9) << "AUC"
      << std::setw(9) << "R@FPR" << std::setw(10) << "Accuracy" << std::setw(11)
      << "Precision" << std::setw(9) << "Recall" << '\n';
  for (const auto& [name, m] : rows) {
    const auto& c = m.confusion;
    out << std::left << std::setw(14) << name << std::right << std::setw(9) << fmt(m.auc)
        << std::setw(9) << fmt(m.r_at_fpr) << std::setw(10) << fmt(c.accuracy)
        << std::setw(11) << (c.precision ? fmt(*c.precision) : std::string("--"))
        << std::setw(9) << fmt(c.recall) << '\n';
  }
}

int cmd_gen(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_run_config(o);
  const fs::path dir = require_out(o);
  const Dataset ds = generate_synthetic(cfg.synth);
  save_dataset(ds, dir);
  write_resolved(dir, cfg);
  out << "sequences " << ds.sequences.size() << '\n'
      << "tokens " << ds.num_tokens() << '\n'
      << "positive_rate " << fmt(ds.positive_rate()) << '\n'
      << "layers " << ds.meta.layers.size() << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_run_config(o);
  const Dataset ds = load_checked(o);
  const fs::path dir = require_out(o);
  write_resolved(dir, cfg);
  const int layer = probe_layer(cfg, ds);
  const auto [train_set, validation] = split_for(cfg, ds);
  const ProbeArch arch = cfg.probe.arch(ds.meta.hidden_dim);
  const ProbeParams init = init_probe(arch, substream_seed(cfg.seed, "probe"));
  const TrainResult result = train(init, train_set, &validation, layer, cfg.loss, cfg.train);

  const fs::path ckpt = o.checkpoint.empty() ? dir / "probe.ckpt" : fs::path(o.checkpoint);
  save_checkpoint(ckpt, result.params, {cfg.seed, layer, ds.meta.fingerprint});
  const EvalRecord& fin = *result.history.final_eval;
  Json metrics = {{"layer", layer},
                  {"probe", std::string(to_string(arch.kind))},
                  {"selected_step", result.history.selected_step},
                  {"metrics", to_json(fin.metrics)},
                  {"loss", to_json(fin.loss)}};
  write_text_file(dir / "metrics.json", metrics.dump(2) + "\n");
  std::vector<Json> steps, evals;
  for (const auto& s : result.history.steps) steps.push_back(to_json(s));
  for (const auto& e : result.history.evals) evals.push_back(to_json(e));
  write_text_file(dir / "history.jsonl", to_jsonl(steps));
  write_text_file(dir / "evals.jsonl", to_jsonl(evals));
  const std::string name = std::string(to_string(arch.kind)) + "-probe";
  write_text_file(dir / "metrics.csv",
                  metrics_csv_header() + metrics_csv_row(name, fin.metrics));
  out << "layer " << layer << ", " << result.history.steps.size() << " steps, checkpoint "
      << ckpt.string() << '\n';
  print_metrics_table(out, {{name, fin.metrics}});
  return kExitOk;
}

// Baseline scores over the unmasked tokens of `ds`, in score_tokens order.
std::optional<MetricsReport> perplexity_baseline(const Dataset& ds, const RunConfig& cfg) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& seq : ds.sequences) {
    if (!seq.nll) return std::nullopt;
    const auto ppl = perplexity_scores(*seq.nll, cfg.metrics.perplexity_window);
    for (int t = 0; t < seq.num_tokens; ++t) {
      if (!seq.mask[t]) continue;
      scores.push_back(ppl[t]);
      labels.push_back(seq.token_labels[t]);
    }
  }
  return compute_metrics(scores, labels, cfg.metrics.fpr_target, cfg.metrics.threshold);
}

std::optional<MetricsReport> entropy_baseline(const Dataset& ds, const RunConfig& cfg) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& seq : ds.sequences) {
    if (!seq.dist_base) return std::nullopt;
    const auto& d = *seq.dist_base;
    for (int t = 0; t < seq.num_tokens; ++t) {
      if (!seq.mask[t]) continue;
      scores.push_back(entropy_score(std::span<const float>(d.row(t).data(), d.cols())));
      labels.push_back(seq.token_labels[t]);
    }
  }
  return compute_metrics(scores, labels, cfg.metrics.fpr_target, cfg.metrics.threshold);
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_run_config(o);
  const Dataset ds = load_checked(o);
  fs::path ckpt_path = o.checkpoint;
  if (ckpt_path.empty()) {
    if (o.out.empty()) throw ConfigError("eval needs --checkpoint or --out");
    ckpt_path = fs::path(o.out) / "probe.ckpt";
  }
  if (!fs::exists(ckpt_path)) throw MissingDataError("no checkpoint at " + ckpt_path.string());
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (!ds.has_layer(ckpt.info.layer)) {
    throw MissingDataError("checkpoint layer " + std::to_string(ckpt.info.layer) +
                           " not in dataset");
  }
  const auto [train_set, validation] = split_for(cfg, ds);
  const Evaluation ev = evaluate(ckpt.params, validation, ckpt.info.layer, cfg.loss,
                                 cfg.metrics.fpr_target, cfg.metrics.threshold);

  std::vector<std::pair<std::string, MetricsReport>> rows;
  if (auto m = perplexity_baseline(validation, cfg)) rows.emplace_back("perplexity", *m);
  if (auto m = entropy_baseline(validation, cfg)) rows.emplace_back("entropy", *m);
  const std::string name = std::string(to_string(ckpt.params.arch.kind)) + "-probe";
  rows.emplace_back(name, ev.metrics);

  if (!o.out.empty()) {
    const fs::path dir = require_out(o);
    write_resolved(dir, cfg);
    Json j = {{"layer", ckpt.info.layer},
              {"checkpoint", ckpt_path.string()},
              {"metrics", to_json(ev.metrics)},
              {"loss", to_json(ev.loss)}};
    Json baselines = Json::object();
    std::string csv = metrics_csv_header();
    for (const auto& [method, m] : rows) {
      if (method != name) baselines[method] = to_json(m);
      csv += metrics_csv_row(method, m);
    }
    j["baselines"] = baselines;
    write_text_file(dir / "eval_metrics.json", j.dump(2) + "\n");
    write_text_file(dir / "eval_metrics.csv", csv);
  }
  out << "layer " << ckpt.info.layer << '\n';
  print_metrics_table(out, rows);
  return kExitOk;
}

int cmd_layer_search(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_run_config(o);
  const Dataset ds = load_checked(o);
  const fs::path dir = require_out(o);
  write_resolved(dir, cfg);
  if (ds.meta.layers.size() < 2) {
    err << "warning: dataset stores a single layer; the search is trivial\n";
  }
  const ProbeArch arch = cfg.probe.arch(ds.meta.hidden_dim);
  const BOTrace trace =
      run_search(ds, cfg.bo, arch, cfg.loss, cfg.train, cfg.validation_fraction);

  std::vector<Json> rows;
  for (const auto& s : trace.steps) rows.push_back(to_json(s));
  write_text_file(dir / "trace.jsonl", to_jsonl(rows));
  write_text_file(dir / "layers.csv", profile_csv(trace.profile));
  Json summary = {{"best_layer", trace.best_layer},
                  {"evaluations", trace.steps.size()},
                  {"profile", to_json(trace.profile)},
                  {"error", trace.error ? Json(*trace.error) : Json(nullptr)}};
  if (!trace.steps.empty()) summary["best_utility"] = trace.steps.back().incumbent_utility;
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");

  for (const auto& s : trace.steps) {
    out << "t=" << s.t << " layer=" << s.layer << " R@FPR=" << fmt(s.performance)
        << " U=" << fmt(s.utility) << (s.initial ? " (init)" : "") << '\n';
  }
  if (trace.error) {
    err << "error: search aborted at " << *trace.error << '\n';
    return trace.numeric_failure ? kExitNumeric : kExitFailure;
  }
  out << "best_layer " << trace.best_layer << '\n';
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_run_config(o);
  const Dataset ds = load_checked(o);
  const fs::path dir = require_out(o);
  write_resolved(dir, cfg);
  const int layer = probe_layer(cfg, ds);
  const auto [train_set, validation] = split_for(cfg, ds);
  const AblationReport report =
      run_ablation(train_set, validation, layer, cfg.probe.arch(ds.meta.hidden_dim), cfg.loss,
                   cfg.train, substream_seed(cfg.seed, "probe"));
  write_text_file(dir / "ablation.csv", ablation_csv(report));
  write_text_file(dir / "ablation.json", to_json(report).dump(2) + "\n");
  out << "full AUC " << fmt(report.full.auc) << " R@FPR " << fmt(report.full.r_at_fpr) << '\n';
  out << std::left << std::setw(12) << "Component" << std::right << std::setw(11) << "dAUC"
      << std::setw(11) << "dR@FPR" << '\n';
  for (const auto& r : report.rows) {
    out << std::left << std::setw(12) << ("-" + r.component) << std::right << std::setw(11)
        << fmt(r.delta_auc) << std::setw(11) << fmt(r.delta_r_at_fpr) << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Token-level hallucination probes on hidden states"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run config");
    sub->add_option("--dataset", o.dataset, "dataset directory");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", seed, "global seed (overrides the config)");
    sub->add_option("--set", o.overrides, "override, e.g. --set loss.gamma_focal=1")
        ->take_all();
    return sub;
  };
  auto* gen = add_common(app.add_subcommand("gen", "generate a synthetic dataset"));
  auto* train_cmd = add_common(app.add_subcommand("train", "train a probe"));
  train_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint path");
  auto* eval_cmd = add_common(app.add_subcommand("eval", "evaluate a checkpoint"));
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint path");
  auto* search = add_common(app.add_subcommand("layer-search", "search the probe layer"));
  auto* ablate = add_common(app.add_subcommand("ablate", "leave-one-out loss ablation"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) o.seed = seed;
  }

  try {
    if (gen->parsed()) return cmd_gen(o, out);
    if (train_cmd->parsed()) return cmd_train(o, out);
    if (eval_cmd->parsed()) return cmd_eval(o, out);
    if (search->parsed()) return cmd_layer_search(o, out, err);
    if (ablate->parsed()) return cmd_ablate(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingDataError& e) {
    err << "missing data: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace hprobe
