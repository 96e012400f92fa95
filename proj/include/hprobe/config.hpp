#ifndef HPROBE_CONFIG_HPP_
#define HPROBE_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "hprobe/ablation.hpp"
#include "hprobe/bayesopt.hpp"
#include "hprobe/layer_model.hpp"
#include "hprobe/loss.hpp"
#include "hprobe/metrics.hpp"
#include "hprobe/probe.hpp"
#include "hprobe/synthetic.hpp"
#include "hprobe/trainer.hpp"

namespace hprobe {

using Json = nlohmann::ordered_json;

struct ProbeSection {
  ProbeKind kind = ProbeKind::kMlp;
  std::vector<int> hidden_widths;  // empty = default MLP widths
  Activation activation = Activation::kGelu;
  bool layer_norm = true;
  int layer = 0;  // 0 = default probe layer

  ProbeArch arch(int hidden_dim) const;
};

struct MetricsSection {
  double fpr_target = 0.1;
  double threshold = 0.5;
  int perplexity_window = 1;
};

// Module seeds are not configured directly: each is derived from `seed`
// through a named sub-stream.
struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  ProbeSection probe;
  LossConfig loss;
  TrainConfig train;
  double validation_fraction = 0.2;
  BOConfig bo;
  LayerModelParams layer_model;
  MetricsSection metrics;

  // Copies the seed and the shared metric settings into the module configs.
  void resolve();
};

// Missing keys keep their defaults; unknown keys and type mismatches throw
// ConfigError naming the key.
RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& cfg);

// Validates every section. Throws ConfigError.
void validate_run_config(const RunConfig& cfg);

Json load_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// `path=value` with a dotted path; value is parsed as JSON when possible and
// kept as a string otherwise.
void apply_override(Json& j, const std::string& assignment);

Json to_json(const MetricsReport& m);
Json to_json(const LossBreakdown& l);
Json to_json(const StepRecord& s);
Json to_json(const EvalRecord& e);
Json to_json(const BOStep& s);
Json to_json(const LayerProfile& p);
Json to_json(const AblationReport& r);

// One compact JSON object per line.
std::string to_jsonl(const std::vector<Json>& rows);

}  // namespace hprobe

#endif  // HPROBE_CONFIG_HPP_
