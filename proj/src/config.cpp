#include "hprobe/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "hprobe/error.hpp"
#include "hprobe/random.hpp"

namespace hprobe {

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be a JSON object");
  }

  void get(const char* key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  // null reads as +inf.
  void get_or_inf(const char* key, double& out) {
    if (const Json* v = find(key)) {
      if (v->is_null()) {
        out = std::numeric_limits<double>::infinity();
      } else {
        if (!v->is_number()) fail(key, "a number or null");
        out = v->get<double>();
      }
    }
  }
  // null reads as nullopt.
  void get(const char* key, std::optional<double>& out) {
    if (const Json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else {
        if (!v->is_number()) fail(key, "a number or null");
        out = v->get<double>();
      }
    }
  }
  void get(const char* key, int& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "an integer");
      const auto x = v->get<std::int64_t>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        fail(key, "an integer in int range");
      }
      out = static_cast<int>(x);
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<int>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) fail(key, "an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  template <class F>
  void get_string(const char* key, F&& parse) {
    std::string s;
    if (find(key)) {
      get(key, s);
      parse(s);
    }
  }

  const Json* find(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown key '" + qualified(k.c_str()) + "'");
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw ConfigError(qualified(key) + " must be " + expected);
  }
  std::string qualified(const char* key) const {
    return name_.empty() ? std::string(key) : name_ + "." + key;
  }

  const Json& j_;
  std::string name_;
  std::set<std::string> used_;
};

Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace

ProbeArch ProbeSection::arch(int hidden_dim) const {
  if (kind == ProbeKind::kLinear) return ProbeArch::linear(hidden_dim);
  if (hidden_widths.empty()) {
    ProbeArch a = ProbeArch::default_mlp(hidden_dim);
    a.activation = activation;
    a.use_layer_norm = layer_norm;
    return a;
  }
  return ProbeArch::mlp(hidden_dim, hidden_widths, activation, layer_norm);
}

void RunConfig::resolve() {
  synth.seed = substream_seed(seed, "synth");
  train.seed = substream_seed(seed, "train");
  train.fpr_target = metrics.fpr_target;
  train.threshold = metrics.threshold;
  bo.seed = substream_seed(seed, "bo");
  bo.model = layer_model;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig cfg;
  Section top(j, "");
  top.get("seed", cfg.seed);

  if (const Json* s = top.find("synth")) {
    Section r(*s, "synth");
    auto& c = cfg.synth;
    r.get("num_sequences", c.num_sequences);
    r.get("tokens_per_sequence", c.tokens_per_sequence);
    r.get("hidden_dim", c.hidden_dim);
    r.get("num_layers", c.num_layers);
    r.get("peak_layer", c.peak_layer);
    r.get("profile_width", c.profile_width);
    r.get("max_separation", c.max_separation);
    r.get_string("structure", [&](const std::string& v) { c.structure = structure_from_string(v); });
    r.get("positive_span_rate", c.positive_span_rate);
    r.get("mean_span_length", c.mean_span_length);
    r.get("vocab_size", c.vocab_size);
    r.get("noise_scale", c.noise_scale);
    r.get("entity_offset", c.entity_offset);
    r.get("high_nll_span_fraction", c.high_nll_span_fraction);
    r.finish();
  }
  if (const Json* s = top.find("probe")) {
    Section r(*s, "probe");
    auto& c = cfg.probe;
    r.get_string("kind", [&](const std::string& v) { c.kind = probe_kind_from_string(v); });
    r.get("hidden_widths", c.hidden_widths);
    r.get_string("activation",
                 [&](const std::string& v) { c.activation = activation_from_string(v); });
    r.get("layer_norm", c.layer_norm);
    r.get("layer", c.layer);
    r.finish();
  }
  if (const Json* s = top.find("loss")) {
    Section r(*s, "loss");
    auto& c = cfg.loss;
    r.get("gamma_focal", c.gamma_focal);
    r.get("alpha_pos", c.alpha_pos);
    r.get("lambda_soft", c.lambda_soft);
    r.get("lambda_span", c.lambda_span);
    r.get("lambda_sparse", c.lambda_sparse);
    r.get("lambda_kl", c.lambda_kl);
    r.get_or_inf("tau", c.tau);
    r.get("sample_weight_default", c.sample_weight_default);
    r.get("use_focal", c.use_focal);
    r.finish();
  }
  if (const Json* s = top.find("train")) {
    Section r(*s, "train");
    auto& c = cfg.train;
    r.get("learning_rate", c.learning_rate);
    r.get("epochs", c.epochs);
    r.get("batch_size", c.batch_size);
    r.get_string("optimizer", [&](const std::string& v) {
      if (v == "adam") {
        c.optimizer.kind = OptimizerKind::kAdam;
      } else if (v == "sgd") {
        c.optimizer.kind = OptimizerKind::kSgd;
      } else {
        throw ConfigError("train.optimizer must be 'adam' or 'sgd', got '" + v + "'");
      }
    });
    r.get("adam_beta1", c.optimizer.beta1);
    r.get("adam_beta2", c.optimizer.beta2);
    r.get("adam_eps", c.optimizer.eps);
    r.get("grad_clip", c.grad_clip);
    r.get("eval_every", c.eval_every);
    r.get("select_best", c.select_best);
    r.get("validation_fraction", cfg.validation_fraction);
    r.finish();
  }
  if (const Json* s = top.find("bo")) {
    Section r(*s, "bo");
    auto& c = cfg.bo;
    r.get("candidate_layers", c.candidate_layers);
    r.get("n_init", c.n_init);
    r.get("iterations", c.iterations);
    r.get_string("acquisition",
                 [&](const std::string& v) { c.acquisition = acquisition_from_string(v); });
    r.get("ucb_delta", c.ucb_delta);
    r.get("length_scale", c.gp.length_scale);
    r.get("signal_variance", c.gp.signal_variance);
    r.get("noise_variance", c.gp.noise_variance);
    r.get("refresh_hyper", c.refresh_hyper);
    r.get("allow_repeats", c.allow_repeats);
    r.finish();
  }
  if (const Json* s = top.find("layer_model")) {
    Section r(*s, "layer_model");
    auto& c = cfg.layer_model;
    r.get("beta0", c.beta0);
    r.get("beta1", c.beta1);
    r.get("gamma_capacity", c.gamma_capacity);
    r.get("eta", c.eta);
    r.get("lora_rank", c.lora_rank);
    r.get("alpha", c.alpha);
    r.get("num_layers", c.num_layers);
    r.get("lambda_perturb", c.lambda_perturb);
    r.get("lm_loss_base", c.lm_loss_base);
    r.get("w", c.w);
    r.finish();
  }
  if (const Json* s = top.find("metrics")) {
    Section r(*s, "metrics");
    r.get("fpr_target", cfg.metrics.fpr_target);
    r.get("threshold", cfg.metrics.threshold);
    r.get("perplexity_window", cfg.metrics.perplexity_window);
    r.finish();
  }
  top.finish();
  cfg.resolve();
  return cfg;
}

Json to_json(const RunConfig& cfg) {
  Json j;
  j["seed"] = cfg.seed;
  const auto& s = cfg.synth;
  j["synth"] = {{"num_sequences", s.num_sequences},
                {"tokens_per_sequence", s.tokens_per_sequence},
                {"hidden_dim", s.hidden_dim},
                {"num_layers", s.num_layers},
                {"peak_layer", s.peak_layer},
                {"profile_width", s.profile_width},
                {"max_separation", s.max_separation},
                {"structure", std::string(to_string(s.structure))},
                {"positive_span_rate", s.positive_span_rate},
                {"mean_span_length", s.mean_span_length},
                {"vocab_size", s.vocab_size},
                {"noise_scale", s.noise_scale},
                {"entity_offset", s.entity_offset},
                {"high_nll_span_fraction", s.high_nll_span_fraction}};
  const auto& p = cfg.probe;
  j["probe"] = {{"kind", std::string(to_string(p.kind))},
                {"hidden_widths", p.hidden_widths},
                {"activation", std::string(to_string(p.activation))},
                {"layer_norm", p.layer_norm},
                {"layer", p.layer}};
  const auto& l = cfg.loss;
  j["loss"] = {{"gamma_focal", l.gamma_focal},
               {"alpha_pos", l.alpha_pos},
               {"lambda_soft", l.lambda_soft},
               {"lambda_span", l.lambda_span},
               {"lambda_sparse", l.lambda_sparse},
               {"lambda_kl", l.lambda_kl},
               {"tau", number_or_null(l.tau)},
               {"sample_weight_default", l.sample_weight_default},
               {"use_focal", l.use_focal}};
  const auto& t = cfg.train;
  j["train"] = {{"learning_rate", t.learning_rate},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"optimizer", t.optimizer.kind == OptimizerKind::kAdam ? "adam" : "sgd"},
                {"adam_beta1", t.optimizer.beta1},
                {"adam_beta2", t.optimizer.beta2},
                {"adam_eps", t.optimizer.eps},
                {"grad_clip", t.grad_clip ? Json(*t.grad_clip) : Json(nullptr)},
                {"eval_every", t.eval_every},
                {"select_best", t.select_best},
                {"validation_fraction", cfg.validation_fraction}};
  const auto& b = cfg.bo;
  j["bo"] = {{"candidate_layers", b.candidate_layers},
             {"n_init", b.n_init},
             {"iterations", b.iterations},
             {"acquisition", std::string(to_string(b.acquisition))},
             {"ucb_delta", b.ucb_delta},
             {"length_scale", b.gp.length_scale},
             {"signal_variance", b.gp.signal_variance},
             {"noise_variance", b.gp.noise_variance},
             {"refresh_hyper", b.refresh_hyper},
             {"allow_repeats", b.allow_repeats}};
  const auto& m = cfg.layer_model;
  j["layer_model"] = {{"beta0", m.beta0},
                      {"beta1", m.beta1},
                      {"gamma_capacity", m.gamma_capacity},
                      {"eta", m.eta},
                      {"lora_rank", m.lora_rank},
                      {"alpha", m.alpha},
                      {"num_layers", m.num_layers},
                      {"lambda_perturb", m.lambda_perturb},
                      {"lm_loss_base", m.lm_loss_base},
                      {"w", m.w}};
  j["metrics"] = {{"fpr_target", cfg.metrics.fpr_target},
                  {"threshold", cfg.metrics.threshold},
                  {"perplexity_window", cfg.metrics.perplexity_window}};
  return j;
}

void validate_run_config(const RunConfig& cfg) {
  validate_synth_config(cfg.synth);
  validate_arch(cfg.probe.arch(cfg.synth.hidden_dim));
  if (cfg.probe.layer < 0) throw ConfigError("probe.layer must be >= 0");
  validate_loss_config(cfg.loss);
  validate_train_config(cfg.train);
  if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0)) {
    throw ConfigError("train.validation_fraction must lie in (0, 1)");
  }
  validate_bo_config(cfg.bo);
  validate_layer_model_params(cfg.layer_model);
  if (!(cfg.metrics.fpr_target > 0.0 && cfg.metrics.fpr_target < 1.0)) {
    throw ConfigError("metrics.fpr_target must lie in (0, 1)");
  }
  if (!(cfg.metrics.threshold >= 0.0 && cfg.metrics.threshold <= 1.0)) {
    throw ConfigError("metrics.threshold must lie in [0, 1]");
  }
  if (cfg.metrics.perplexity_window < 1) {
    throw ConfigError("metrics.perplexity_window must be >= 1");
  }
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects KEY=VALUE, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  Json* node = &j;
  std::stringstream parts(path);
  std::string part;
  std::vector<std::string> keys;
  while (std::getline(parts, part, '.')) keys.push_back(part);
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (!node->is_object()) throw ConfigError("--set path '" + path + "' crosses a non-object");
    node = &(*node)[keys[i]];
    if (node->is_null()) *node = Json::object();
  }
  if (!node->is_object()) throw ConfigError("--set path '" + path + "' crosses a non-object");
  (*node)[keys.back()] = value;
}

Json to_json(const MetricsReport& m) {
  const auto& c = m.confusion;
  return {{"auc", m.auc},
          {"r_at_fpr", m.r_at_fpr},
          {"fpr_target", m.fpr_target},
          {"threshold", m.threshold},
          {"accuracy", c.accuracy},
          {"precision", c.precision ? Json(*c.precision) : Json(nullptr)},
          {"recall", c.recall},
          {"tp", c.tp},
          {"fp", c.fp},
          {"tn", c.tn},
          {"fn", c.fn}};
}

Json to_json(const LossBreakdown& l) {
  return {{"total", l.total},
          {"focal", l.focal},
          {"span", l.span},
          {"sparse", l.sparse},
          {"kl", l.kl},
          {"masked_span_count", l.masked_span_count}};
}

Json to_json(const StepRecord& s) {
  return {{"step", s.step},
          {"epoch", s.epoch},
          {"loss", to_json(s.loss)},
          {"grad_norm", s.grad_norm},
          {"seconds", s.seconds}};
}

Json to_json(const EvalRecord& e) {
  return {{"step", e.step}, {"metrics", to_json(e.metrics)}, {"loss", to_json(e.loss)}};
}

Json to_json(const BOStep& s) {
  return {{"t", s.t},
          {"layer", s.layer},
          {"initial", s.initial},
          {"performance", s.performance},
          {"separability", s.separability},
          {"lm_loss", s.lm_loss},
          {"utility", s.utility},
          {"acquisition", s.acquisition_value ? Json(*s.acquisition_value) : Json(nullptr)},
          {"incumbent_layer", s.incumbent_layer},
          {"incumbent_utility", s.incumbent_utility}};
}

Json to_json(const LayerProfile& p) {
  Json rows = Json::array();
  for (const auto& r : p.records) {
    rows.push_back({{"layer", r.layer},
                    {"separability", r.separability},
                    {"perf_model", r.perf_model ? Json(*r.perf_model) : Json(nullptr)},
                    {"perf_empirical", r.perf_empirical ? Json(*r.perf_empirical) : Json(nullptr)},
                    {"lm_loss", r.lm_loss},
                    {"perf_norm", r.perf_norm},
                    {"lm_norm", r.lm_norm},
                    {"utility", r.utility}});
  }
  return rows;
}

Json to_json(const AblationReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"removed", row.component},
                    {"metrics", to_json(row.metrics)},
                    {"delta_auc", row.delta_auc},
                    {"delta_r_at_fpr", row.delta_r_at_fpr}});
  }
  return {{"full", to_json(r.full)}, {"rows", rows}};
}

std::string to_jsonl(const std::vector<Json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

}  // namespace hprobe
