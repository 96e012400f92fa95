#include "hprobe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hprobe/error.hpp"
#include "hprobe/random.hpp"

namespace hprobe {

std::string_view to_string(Structure s) {
  switch (s) {
    case Structure::kLinear: return "linear";
    case Structure::kXor: return "xor";
    case Structure::kRing: return "ring";
  }
  return "linear";
}

Structure structure_from_string(std::string_view name) {
  if (name == "linear") return Structure::kLinear;
  if (name == "xor") return Structure::kXor;
  if (name == "ring") return Structure::kRing;
  throw ConfigError("synth.structure must be one of linear, xor, ring (got '" +
                    std::string(name) + "')");
}

void validate_synth_config(const SynthConfig& c, bool allow_degenerate) {
  auto fail = [](const std::string& msg) { throw ConfigError("synth." + msg); };
  if (c.num_sequences < 1) fail("num_sequences must be >= 1");
  if (c.tokens_per_sequence < 1) fail("tokens_per_sequence must be >= 1");
  if (c.hidden_dim < 1) fail("hidden_dim must be >= 1");
  if (c.structure != Structure::kLinear && c.hidden_dim < 2) {
    fail("hidden_dim must be >= 2 for xor and ring structures");
  }
  if (c.entity_offset != 0.0 && c.structure != Structure::kLinear &&
      c.hidden_dim < 3) {
    fail("hidden_dim must be >= 3 when entity_offset is used with xor/ring");
  }
  if (c.num_layers < 1) fail("num_layers must be >= 1");
  if (c.peak_layer < 1 || c.peak_layer > c.num_layers) {
    fail("peak_layer must satisfy 1 <= peak_layer <= num_layers");
  }
  if (!(c.profile_width > 0.0)) fail("profile_width must be > 0");
  if (allow_degenerate ? !(c.max_separation >= 0.0)
                       : !(c.max_separation > 0.0)) {
    fail("max_separation must be > 0");
  }
  if (!(c.positive_span_rate > 0.0 && c.positive_span_rate < 0.5)) {
    fail("positive_span_rate must satisfy 0 < positive_span_rate < 0.5");
  }
  if (!(c.mean_span_length >= 1.0)) fail("mean_span_length must be >= 1");
  if (c.vocab_size < 0) fail("vocab_size must be >= 0");
  if (!(c.noise_scale > 0.0)) fail("noise_scale must be > 0");
  if (!(c.entity_offset >= 0.0)) fail("entity_offset must be >= 0");
  if (!(c.high_nll_span_fraction >= 0.0 && c.high_nll_span_fraction <= 1.0)) {
    fail("high_nll_span_fraction must lie in [0, 1]");
  }
}

double separation_profile(const SynthConfig& cfg, int layer) {
  const double d = layer - cfg.peak_layer;
  return cfg.max_separation *
         std::exp(-d * d / (2.0 * cfg.profile_width * cfg.profile_width));
}

std::uint64_t config_hash(const SynthConfig& c) {
  std::ostringstream s;
  s.precision(17);
  s << c.num_sequences << '|' << c.tokens_per_sequence << '|' << c.hidden_dim
    << '|' << c.num_layers << '|' << c.peak_layer << '|' << c.profile_width
    << '|' << c.max_separation << '|' << to_string(c.structure) << '|'
    << c.positive_span_rate << '|' << c.mean_span_length << '|'
    << c.vocab_size << '|' << c.noise_scale << '|' << c.entity_offset << '|'
    << c.high_nll_span_fraction << '|' << c.seed;
  return fnv1a(s.str());
}

namespace {

std::vector<SpanAnnotation> place_spans(const SynthConfig& cfg, Rng& rng) {
  const int n = cfg.tokens_per_sequence;
  const double expected =
      cfg.positive_span_rate * n / cfg.mean_span_length;
  std::poisson_distribution<int> count(expected);
  std::geometric_distribution<int> extra(1.0 / cfg.mean_span_length);
  std::uniform_int_distribution<int> start_dist(0, n - 1);

  const int n_pos = count(rng);
  const int n_neg = count(rng);
  std::vector<int> labels;
  labels.insert(labels.end(), n_pos, 1);
  labels.insert(labels.end(), n_neg, 0);

  std::vector<std::uint8_t> used(static_cast<std::size_t>(n), 0);
  std::vector<SpanAnnotation> spans;
  for (int label : labels) {
    const int len = std::min(n, 1 + extra(rng));
    for (int attempt = 0; attempt < 100; ++attempt) {
      const int start = start_dist(rng);
      const int end = start + len - 1;
      if (end >= n) continue;
      bool clash = false;
      for (int t = start; t <= end && !clash; ++t) clash = used[t] != 0;
      if (clash) continue;
      for (int t = start; t <= end; ++t) used[t] = 1;
      spans.push_back({start, end, label});
      break;
    }
  }
  std::sort(spans.begin(), spans.end(),
            [](const auto& a, const auto& b) { return a.start < b.start; });
  return spans;
}

FloatMatrix dirichlet_rows(int rows, int vocab, Rng& rng) {
  std::gamma_distribution<double> g(0.5, 1.0);
  FloatMatrix out(rows, vocab);
  std::vector<double> row(static_cast<std::size_t>(vocab));
  for (int r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (auto& v : row) {
      v = g(rng) + 1e-12;
      sum += v;
    }
    for (int v = 0; v < vocab; ++v) out(r, v) = static_cast<float>(row[v] / sum);
  }
  return out;
}

// Multiplicative perturbation exp(delta * u), u ~ U(-1, 1), renormalized.
FloatMatrix perturb_rows(const FloatMatrix& base, Rng& rng) {
  constexpr double kDelta = 0.1;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FloatMatrix out(base.rows(), base.cols());
  std::vector<double> row(static_cast<std::size_t>(base.cols()));
  for (Eigen::Index r = 0; r < base.rows(); ++r) {
    double sum = 0.0;
    for (Eigen::Index v = 0; v < base.cols(); ++v) {
      row[v] = static_cast<double>(base(r, v)) * std::exp(kDelta * u(rng));
      sum += row[v];
    }
    for (Eigen::Index v = 0; v < base.cols(); ++v) {
      out(r, v) = static_cast<float>(row[v] / sum);
    }
  }
  return out;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg, GenerateOptions opts) {
  validate_synth_config(cfg, opts.allow_degenerate);
  const int d = cfg.hidden_dim;
  const int n = cfg.tokens_per_sequence;

  Dataset ds;
  ds.meta.hidden_dim = d;
  ds.meta.num_layers = cfg.num_layers;
  if (cfg.vocab_size > 0) ds.meta.vocab_size = cfg.vocab_size;
  for (int l = 1; l <= cfg.num_layers; ++l) ds.meta.layers.push_back(l);
  {
    std::ostringstream fp;
    fp << "seed=" << cfg.seed << ";config=" << std::hex << config_hash(cfg);
    ds.meta.fingerprint = fp.str();
  }

  // Unit direction of the linear shift; kept orthogonal to the entity axis.
  Eigen::VectorXd direction(d);
  {
    Rng rng = make_rng(cfg.seed, "synth.direction");
    std::normal_distribution<double> z(0.0, 1.0);
    for (int i = 0; i < d; ++i) direction(i) = z(rng);
    if (cfg.entity_offset != 0.0 && d > 1) direction(d - 1) = 0.0;
    direction /= direction.norm();
  }
  std::vector<double> offsets(static_cast<std::size_t>(cfg.num_layers) + 1);
  for (int l = 1; l <= cfg.num_layers; ++l) {
    offsets[l] = separation_profile(cfg, l);
  }

  ds.sequences.resize(static_cast<std::size_t>(cfg.num_sequences));
  for (int s = 0; s < cfg.num_sequences; ++s) {
    const std::string tag = "synth.seq." + std::to_string(s);
    TokenSequence& seq = ds.sequences[s];
    seq.id = "seq-" + std::to_string(s);
    seq.num_tokens = n;
    seq.mask.assign(static_cast<std::size_t>(n), 1);

    Rng span_rng = make_rng(cfg.seed, tag + ".spans");
    seq.spans = place_spans(cfg, span_rng);
    seq.token_labels = labels_from_spans(seq.spans, n);
    std::vector<std::uint8_t> in_span(static_cast<std::size_t>(n), 0);
    for (const auto& sp : seq.spans) {
      for (int t = sp.start; t <= sp.end; ++t) in_span[t] = 1;
    }

    // Per-token geometry shared by all layers: quadrant sign for xor, angle
    // for ring. Xor signs alternate within each class (random start per
    // sequence), so both quadrants of a class hold the same token count up
    // to one and a sample cannot tilt a hyperplane toward either.
    Rng geo_rng = make_rng(cfg.seed, tag + ".geometry");
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::vector<double> sign_a(n), theta(n);
    double next_sign[2] = {coin(geo_rng) ? 1.0 : -1.0, coin(geo_rng) ? 1.0 : -1.0};
    for (int t = 0; t < n; ++t) {
      double& sign = next_sign[seq.token_labels[t] ? 1 : 0];
      sign_a[t] = sign;
      sign = -sign;
      theta[t] = angle(geo_rng);
    }

    Rng noise_rng = make_rng(cfg.seed, tag + ".states");
    std::normal_distribution<double> noise(0.0, cfg.noise_scale);
    for (int l = 1; l <= cfg.num_layers; ++l) {
      const double a = offsets[l];
      FloatMatrix m(n, d);
      for (int t = 0; t < n; ++t) {
        Eigen::VectorXd h(d);
        for (int i = 0; i < d; ++i) h(i) = noise(noise_rng);
        const bool positive = seq.token_labels[t] != 0;
        switch (cfg.structure) {
          case Structure::kLinear:
            if (positive) h += a * direction;
            break;
          case Structure::kXor:
            // Same-sign quadrants are hallucinated, mixed-sign supported.
            h(0) += sign_a[t] * a;
            h(1) += (positive ? sign_a[t] : -sign_a[t]) * a;
            break;
          case Structure::kRing:
            if (positive) {
              h(0) += a * std::cos(theta[t]);
              h(1) += a * std::sin(theta[t]);
            }
            break;
        }
        if (in_span[t]) h(d - 1) += cfg.entity_offset;
        m.row(t) = h.cast<float>().transpose();
      }
      seq.states.emplace(l, std::move(m));
    }

    Rng nll_rng = make_rng(cfg.seed, tag + ".nll");
    std::gamma_distribution<double> base_nll(2.0, 0.5);
    std::exponential_distribution<double> spike(0.5);
    std::bernoulli_distribution spiky(cfg.high_nll_span_fraction);
    std::vector<double> nll(static_cast<std::size_t>(n));
    for (auto& v : nll) v = base_nll(nll_rng);
    for (const auto& sp : seq.spans) {
      if (!spiky(nll_rng)) continue;
      std::uniform_int_distribution<int> pick(sp.start, sp.end);
      nll[pick(nll_rng)] = 10.0 + spike(nll_rng);
    }
    seq.nll = std::move(nll);

    if (cfg.vocab_size > 0) {
      Rng dist_rng = make_rng(cfg.seed, tag + ".dist");
      seq.dist_base = dirichlet_rows(n, cfg.vocab_size, dist_rng);
      seq.dist_adapted = perturb_rows(*seq.dist_base, dist_rng);
    }
  }
  return ds;
}

}  // namespace hprobe
