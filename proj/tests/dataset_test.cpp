#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "json.hpp"

#include "hprobe/dataset.hpp"
#include "hprobe/dataset_io.hpp"
#include "hprobe/error.hpp"
#include "hprobe/layer_model.hpp"
#include "hprobe/synthetic.hpp"
#include "support.hpp"

namespace hprobe {
namespace {

namespace fs = std::filesystem;

SynthConfig small_config(std::uint64_t seed = 7) {
  SynthConfig c;
  c.num_sequences = 12;
  c.tokens_per_sequence = 40;
  c.hidden_dim = 6;
  c.num_layers = 4;
  c.peak_layer = 3;
  c.vocab_size = 5;
  c.seed = seed;
  return c;
}

TEST(LabelsFromSpans, MarksPositiveSpansOnly) {
  const auto y = labels_from_spans({{1, 2, 1}, {4, 4, 0}, {5, 5, 1}}, 7);
  EXPECT_EQ(y, (std::vector<std::uint8_t>{0, 1, 1, 0, 0, 1, 0}));
}

TEST(Validate, GeneratedDatasetIsClean) {
  EXPECT_TRUE(validate(generate_synthetic(small_config())).empty());
}

TEST(Validate, SpanPastEndIsNamed) {
  Dataset ds = generate_synthetic(small_config());
  auto& seq = ds.sequences[2];
  seq.spans.push_back({seq.num_tokens - 1, seq.num_tokens + 3, 0});
  const auto v = validate(ds);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].sequence_id, seq.id);
  EXPECT_EQ(v[0].field, "spans");
  EXPECT_NE(v[0].message.find("out of bounds"), std::string::npos);
}

TEST(Validate, ScaledDistributionRowIsOneFinding) {
  Dataset ds = generate_synthetic(small_config());
  auto& seq = ds.sequences[1];
  seq.dist_base->row(3) *= 2.0f;
  const auto v = validate(ds);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "dist_base");
  EXPECT_NE(v[0].message.find("row 3"), std::string::npos);
}

TEST(Validate, FlagsLabelAndMaskInconsistencies) {
  Dataset ds = generate_synthetic(small_config());
  ds.sequences[0].token_labels[0] ^= 1;
  ds.sequences[1].mask.pop_back();
  ds.sequences[2].id = ds.sequences[3].id;
  std::set<std::string> fields;
  for (const auto& v : validate(ds)) fields.insert(v.field);
  EXPECT_TRUE(fields.count("token_labels"));
  EXPECT_TRUE(fields.count("mask"));
  EXPECT_TRUE(fields.count("id"));
}

TEST(Split, SizesDisjointDeterministic) {
  SynthConfig c = small_config();
  c.num_sequences = 10;
  const Dataset ds = generate_synthetic(c);
  const auto [a, b] = split(ds, 0.8, 1);
  EXPECT_EQ(a.sequences.size(), 8u);
  EXPECT_EQ(b.sequences.size(), 2u);
  std::set<std::string> ids;
  for (const auto& s : a.sequences) ids.insert(s.id);
  for (const auto& s : b.sequences) EXPECT_FALSE(ids.count(s.id));
  const auto [a2, b2] = split(ds, 0.8, 1);
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    EXPECT_EQ(a.sequences[i].id, a2.sequences[i].id);
  }
  EXPECT_THROW(split(ds, 1.0, 1), ConfigError);
  Dataset one = ds;
  one.sequences.resize(1);
  EXPECT_THROW(split(one, 0.5, 1), ConfigError);
}

TEST(Synthetic, ValidationNamesBound) {
  SynthConfig c = small_config();
  c.positive_span_rate = 0.6;
  try {
    generate_synthetic(c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("positive_span_rate"), std::string::npos);
  }
  c = small_config();
  c.max_separation = 0.0;
  EXPECT_THROW(generate_synthetic(c), ConfigError);
  EXPECT_NO_THROW(generate_synthetic(c, {.allow_degenerate = true}));
}

TEST(Synthetic, DeterministicGivenSeed) {
  const Dataset a = generate_synthetic(small_config(3));
  const Dataset b = generate_synthetic(small_config(3));
  const Dataset c = generate_synthetic(small_config(4));
  EXPECT_EQ(a.meta.fingerprint, b.meta.fingerprint);
  EXPECT_TRUE(a.sequences[5].states.at(2) == b.sequences[5].states.at(2));
  EXPECT_FALSE(a.sequences[5].states.at(2) == c.sequences[5].states.at(2));
}

TEST(Synthetic, PositiveRateNearTarget) {
  SynthConfig c;
  c.seed = 2;
  const Dataset ds = generate_synthetic(c);
  EXPECT_NEAR(ds.positive_rate(), 0.05, 0.015);
}

TEST(Synthetic, DegenerateHasNoSeparability) {
  SynthConfig c = small_config();
  // The plug-in estimate is biased upward by roughly d / n_positive.
  c.num_sequences = 400;
  c.tokens_per_sequence = 100;
  c.max_separation = 0.0;
  const Dataset ds = generate_synthetic(c, {.allow_degenerate = true});
  for (int l = 1; l <= c.num_layers; ++l) EXPECT_LT(estimate_separability(ds, l), 0.05);
}

TEST(Synthetic, LinearSeparabilityPeaksAtConfiguredLayer) {
  SynthConfig c;
  c.num_layers = 8;
  c.peak_layer = 6;
  c.seed = 7;
  const Dataset ds = generate_synthetic(c);
  int best = 1;
  double best_s = -1.0;
  for (int l = 1; l <= 8; ++l) {
    const double s = estimate_separability(ds, l);
    if (s > best_s) {
      best_s = s;
      best = l;
    }
  }
  EXPECT_EQ(best, 6);
}

// Rank correlation between estimated and configured separation, per seed.
TEST(Synthetic, SeparabilityOrderFollowsProfile) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthConfig c;
    c.num_sequences = 40;
    c.seed = seed;
    const Dataset ds = generate_synthetic(c);
    std::vector<double> est, truth;
    for (int l = 1; l <= c.num_layers; ++l) {
      est.push_back(estimate_separability(ds, l));
      truth.push_back(separation_profile(c, l));
    }
    auto ranks = [](const std::vector<double>& v) {
      std::vector<double> r(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        double below = 0.0, equal = 0.0;
        for (double x : v) {
          below += x < v[i];
          equal += x == v[i];
        }
        r[i] = below + (equal + 1.0) / 2.0;
      }
      return r;
    };
    const auto ra = ranks(est), rb = ranks(truth);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
      ma += ra[i] / ra.size();
      mb += rb[i] / rb.size();
    }
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
      cov += (ra[i] - ma) * (rb[i] - mb);
      va += (ra[i] - ma) * (ra[i] - ma);
      vb += (rb[i] - mb) * (rb[i] - mb);
    }
    EXPECT_GE(cov / std::sqrt(va * vb), 0.9) << "seed " << seed;
  }
}

TEST(Synthetic, HighNllSpansExceedTau) {
  SynthConfig c;
  c.high_nll_span_fraction = 0.5;
  c.seed = 1;
  const Dataset ds = generate_synthetic(c);
  int spiked = 0, spans = 0;
  for (const auto& s : ds.sequences) {
    for (const auto& sp : s.spans) {
      ++spans;
      double mx = 0.0;
      for (int t = sp.start; t <= sp.end; ++t) mx = std::max(mx, (*s.nll)[t]);
      spiked += mx > 10.0;
    }
  }
  EXPECT_NEAR(static_cast<double>(spiked) / spans, 0.5, 0.1);
}

TEST(DatasetIo, RoundTripIsFieldForField) {
  const auto dir = testing::fresh_dir("io_roundtrip");
  SynthConfig c = small_config();
  c.num_sequences = 2;
  const Dataset ds = generate_synthetic(c);
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  EXPECT_EQ(back.meta.hidden_dim, ds.meta.hidden_dim);
  EXPECT_EQ(back.meta.layers, ds.meta.layers);
  EXPECT_EQ(back.meta.vocab_size, ds.meta.vocab_size);
  EXPECT_EQ(back.meta.fingerprint, ds.meta.fingerprint);
  ASSERT_EQ(back.sequences.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto &a = ds.sequences[i], &b = back.sequences[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_EQ(a.spans, b.spans);
    EXPECT_EQ(a.token_labels, b.token_labels);
    EXPECT_EQ(a.nll, b.nll);
    for (const auto& [l, m] : a.states) EXPECT_TRUE(m == b.states.at(l));
    EXPECT_TRUE(*a.dist_base == *b.dist_base);
    EXPECT_TRUE(*a.dist_adapted == *b.dist_adapted);
  }
}

void corrupt(const fs::path& file, std::size_t offset, const std::string& bytes) {
  std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(static_cast<std::streamoff>(offset));
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TEST(DatasetIo, BadMagicNamesExpectedMagic) {
  const auto dir = testing::fresh_dir("io_magic");
  save_dataset(generate_synthetic(small_config()), dir);
  corrupt(dir / "states.bin", 0, "XXXX");
  try {
    load_dataset(dir);
    FAIL();
  } catch (const BadMagicError& e) {
    EXPECT_NE(std::string(e.what()).find("TPHD"), std::string::npos);
  }
}

TEST(DatasetIo, VersionMismatch) {
  const auto dir = testing::fresh_dir("io_version");
  save_dataset(generate_synthetic(small_config()), dir);
  corrupt(dir / "states.bin", 4, std::string("\x09\x00\x00\x00", 4));
  EXPECT_THROW(load_dataset(dir), VersionMismatchError);
}

TEST(DatasetIo, TruncatedBlobNamesSequence) {
  const auto dir = testing::fresh_dir("io_truncated");
  const DatasetMeta meta = save_dataset(generate_synthetic(small_config()), dir);
  // Cut halfway through the first layer matrix of sequence 4.
  const auto& idx = meta.index[4];
  const std::uint64_t cut = idx.layer_offsets.begin()->second + 6 * 40 * 4 / 2;
  fs::resize_file(dir / "states.bin", cut);
  try {
    load_dataset(dir);
    FAIL();
  } catch (const TruncatedBlobError& e) {
    EXPECT_EQ(e.sequence_id(), idx.id);
    EXPECT_NE(std::string(e.what()).find(idx.id), std::string::npos);
  }
}

TEST(DatasetIo, OffsetOutOfBounds) {
  const auto dir = testing::fresh_dir("io_offset");
  save_dataset(generate_synthetic(small_config()), dir);
  std::ifstream in(dir / "manifest.json");
  nlohmann::json m = nlohmann::json::parse(in);
  in.close();
  m["sequences"][3]["offsets"]["layers"]["2"] = 1ull << 40;
  std::ofstream(dir / "manifest.json") << m.dump();
  try {
    load_dataset(dir);
    FAIL();
  } catch (const OffsetOutOfBoundsError& e) {
    EXPECT_EQ(e.sequence_id(), "seq-3");
  }
}

}  // namespace
}  // namespace hprobe
