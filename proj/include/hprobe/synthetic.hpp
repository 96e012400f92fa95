#ifndef HPROBE_SYNTHETIC_HPP_
#define HPROBE_SYNTHETIC_HPP_

#include <cstdint>
#include <string>
#include <string_view>

#include "hprobe/dataset.hpp"

namespace hprobe {

// How hallucinated tokens differ from supported ones in hidden space.
//  kLinear: hallucinated class mean shifted along a fixed unit direction.
//  kXor:    class given by the sign product of coordinates 0 and 1.
//  kRing:   hallucinated tokens sit on a ring of the offset radius in the
//           (0, 1) plane; supported tokens stay near the origin.
enum class Structure { kLinear, kXor, kRing };

std::string_view to_string(Structure s);
Structure structure_from_string(std::string_view name);

struct SynthConfig {
  int num_sequences = 100;
  int tokens_per_sequence = 100;
  int hidden_dim = 16;
  int num_layers = 8;
  int peak_layer = 6;
  double profile_width = 1.5;
  // Offset magnitude at peak_layer, in units of the noise coordinates.
  double max_separation = 3.0;
  Structure structure = Structure::kLinear;
  // Expected fraction of tokens inside hallucinated spans. Supported entity
  // spans are drawn with the same expected count.
  double positive_span_rate = 0.05;
  double mean_span_length = 3.0;
  // 0 disables the paired next-token distributions.
  int vocab_size = 32;
  double noise_scale = 1.0;
  // Shift along the last coordinate applied to every span token (both
  // labels), so entity tokens are distinguishable from running text.
  double entity_offset = 0.0;
  // Fraction of spans carrying one token with a large NLL spike (>= 10).
  double high_nll_span_fraction = 0.1;
  std::uint64_t seed = 0;
};

// Throws ConfigError naming the first violated bound. `allow_degenerate`
// permits max_separation = 0.
void validate_synth_config(const SynthConfig& cfg,
                           bool allow_degenerate = false);

// max_separation * exp(-(l - peak)^2 / (2 width^2)).
double separation_profile(const SynthConfig& cfg, int layer);

// Stable hash of every field; part of the dataset fingerprint.
std::uint64_t config_hash(const SynthConfig& cfg);

struct GenerateOptions {
  bool allow_degenerate = false;
};

// Deterministic in cfg (including seed). Stores every layer 1..num_layers.
Dataset generate_synthetic(const SynthConfig& cfg, GenerateOptions opts = {});

}  // namespace hprobe

#endif  // HPROBE_SYNTHETIC_HPP_
