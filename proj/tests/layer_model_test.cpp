#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hprobe/error.hpp"
#include "hprobe/layer_model.hpp"
#include "hprobe/probe.hpp"

namespace hprobe {
namespace {

// Dataset with one 1-D layer whose classes are N(0, 1) and N(mu, 1).
Dataset two_gaussians(double mu, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Dataset ds;
  ds.meta.hidden_dim = 1;
  ds.meta.num_layers = 1;
  ds.meta.layers = {1};
  TokenSequence seq;
  seq.id = "g";
  seq.num_tokens = 2 * n;
  seq.mask.assign(2 * n, 1);
  seq.spans = {{n, 2 * n - 1, 1}};
  seq.token_labels = labels_from_spans(seq.spans, 2 * n);
  FloatMatrix m(2 * n, 1);
  for (int t = 0; t < 2 * n; ++t) m(t, 0) = static_cast<float>(z(rng) + (t >= n ? mu : 0.0));
  seq.states.emplace(1, m);
  ds.sequences.push_back(seq);
  return ds;
}

TEST(Separability, IdenticalClassesNearZero) {
  EXPECT_LE(estimate_separability(two_gaussians(0.0, 1000, 1), 1), 0.05);
}

TEST(Separability, UnitShiftIsHalf) {
  EXPECT_NEAR(estimate_separability(two_gaussians(1.0, 20000, 2), 1), 0.5, 0.05);
}

TEST(Separability, ClosedFormKl) {
  const std::vector<double> m1 = {0.0, 1.0}, v1 = {1.0, 2.0}, m2 = {1.0, 1.0}, v2 = {1.0, 4.0};
  const double expected = 0.5 + 0.5 * (std::log(2.0) + 0.5 - 1.0);
  EXPECT_NEAR(diagonal_gaussian_kl(m1, v1, m2, v2), expected, 1e-15);
  EXPECT_EQ(diagonal_gaussian_kl(m1, v1, m1, v1), 0.0);
}

TEST(Separability, MissingClassOrLayer) {
  Dataset ds = two_gaussians(1.0, 10, 3);
  EXPECT_THROW(estimate_separability(ds, 2), MissingDataError);
  ds.sequences[0].spans.clear();
  ds.sequences[0].token_labels.assign(20, 0);
  EXPECT_THROW(estimate_separability(ds, 1), MissingDataError);
}

TEST(PerformanceModel, ScalarValues) {
  LayerModelParams p;
  p.beta0 = 0.0;
  p.beta1 = 2.0;
  p.gamma_capacity = 1.0;
  p.num_layers = 10;
  p.lora_rank = 1.0;
  p.eta = 0.0;
  EXPECT_NEAR(performance_model(10, 1.0, p), 0.7310585786300049, 1e-12);
  p.beta1 = p.gamma_capacity = p.eta = 0.0;
  p.beta0 = 0.4;
  EXPECT_EQ(performance_model(1, 3.0, p), performance_model(9, 0.0, p));
  EXPECT_EQ(performance_model(1, 3.0, p), sigmoid(0.4));
  p = LayerModelParams{};
  p.beta0 = p.eta * p.alpha;
  p.gamma_capacity = 0.0;
  EXPECT_EQ(performance_model(3, 0.0, p), 0.5);
}

TEST(LmLossModel, AffineInSeparability) {
  LayerModelParams p;
  p.lm_loss_base = 2.0;
  p.lambda_perturb = 0.5;
  p.alpha = 0.2;
  EXPECT_NEAR(lm_loss_model(4, p, 1.5), 2.15, 1e-15);
  p.lambda_perturb = 0.0;
  EXPECT_EQ(lm_loss_model(4, p, 1.5), 2.0);
  p.lambda_perturb = 0.5;
  p.alpha = 0.0;
  EXPECT_EQ(lm_loss_model(4, p, 1.5), 2.0);
}

LayerRecord record(int layer, double a, double lm) {
  LayerRecord r;
  r.layer = layer;
  r.perf_empirical = a;
  r.lm_loss = lm;
  return r;
}

TEST(Normalize, SingleEntryIsHalf) {
  const LayerProfile p = normalize_and_utility({{record(4, 0.3, 2.0)}}, 0.8);
  EXPECT_EQ(p.records[0].perf_norm, 0.5);
  EXPECT_EQ(p.records[0].lm_norm, 0.5);
  EXPECT_NEAR(p.records[0].utility, 0.8 * 0.5 - 0.2 * 0.5, 1e-15);
}

TEST(Normalize, ThreeEntriesByHand) {
  const LayerProfile p = normalize_and_utility(
      {{record(1, 0.2, 1.0), record(2, 0.5, 2.0), record(3, 0.8, 3.0)}}, 0.5);
  // A~ = L~ = (0, 0.5, 1), so U = 0.5 A~ - 0.5 L~ = 0 everywhere.
  for (const auto& r : p.records) EXPECT_NEAR(r.utility, 0.0, 1e-15);
  EXPECT_NEAR(p.records[1].perf_norm, 0.5, 1e-15);
  const LayerProfile q = normalize_and_utility(
      {{record(1, 0.2, 3.0), record(2, 0.5, 2.0), record(3, 0.8, 1.0)}}, 0.25);
  EXPECT_NEAR(q.records[0].utility, -0.75, 1e-15);
  EXPECT_NEAR(q.records[1].utility, 0.25 * 0.5 - 0.75 * 0.5, 1e-15);
  EXPECT_NEAR(q.records[2].utility, 0.25, 1e-15);
}

TEST(Normalize, EmptyAndBadWeight) {
  EXPECT_THROW(normalize_and_utility({}, 0.5), MissingDataError);
  EXPECT_THROW(normalize_and_utility({{record(1, 0.2, 1.0)}}, 1.5), ConfigError);
}

TEST(BestLayer, TiesGoToSmallerLayer) {
  LayerProfile p;
  for (int l : {9, 5, 7}) {
    LayerRecord r;
    r.layer = l;
    r.utility = l == 7 ? 0.1 : 0.4;
    p.records.push_back(r);
  }
  EXPECT_EQ(best_layer(p), 5);
  EXPECT_THROW(best_layer(LayerProfile{}), MissingDataError);
}

TEST(BestLayer, WeightOneFollowsPerformanceWeightZeroFollowsLoss) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    LayerProfile p;
    int arg_a = 0, arg_l = 0;
    double max_a = -1.0, min_l = 10.0;
    for (int l = 1; l <= 8; ++l) {
      const double a = u(rng), lm = 2.0 + u(rng);
      p.records.push_back(record(l, a, lm));
      if (a > max_a) max_a = a, arg_a = l;
      if (lm < min_l) min_l = lm, arg_l = l;
    }
    EXPECT_EQ(best_layer(normalize_and_utility(p, 1.0)), arg_a);
    EXPECT_EQ(best_layer(normalize_and_utility(p, 0.0)), arg_l);
  }
}

TEST(FitPerformanceModel, RecoversCoefficients) {
  LayerModelParams truth;
  truth.beta0 = -0.4;
  truth.beta1 = 1.7;
  truth.gamma_capacity = 3.0;
  truth.num_layers = 16;
  truth.lora_rank = 2.0;
  LayerProfile p;
  for (int l = 1; l <= 16; ++l) {
    LayerRecord r;
    r.layer = l;
    r.separability = 0.1 * ((l * 7) % 11);
    r.perf_empirical = performance_model(l, r.separability, truth);
    p.records.push_back(r);
  }
  LayerModelParams start = truth;
  start.beta0 = start.beta1 = start.gamma_capacity = 0.0;
  const LayerModelParams fit = fit_performance_model(p, start);
  EXPECT_NEAR(fit.beta0, -0.4, 1e-9);
  EXPECT_NEAR(fit.beta1, 1.7, 1e-9);
  EXPECT_NEAR(fit.gamma_capacity, 3.0, 1e-9);
}

TEST(ProfileCsv, HeaderAndRows) {
  const LayerProfile p = normalize_and_utility({{record(2, 0.4, 2.0)}}, 1.0);
  const std::string csv = profile_csv(p);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "layer,separability,perf_model,perf_empirical,lm_loss,perf_norm,lm_norm,utility");
  EXPECT_NE(csv.find("\n2,0,,0.4,2,0.5,0.5,0.5\n"), std::string::npos);
}

}  // namespace
}  // namespace hprobe
