#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "hprobe/checkpoint.hpp"
#include "hprobe/error.hpp"
#include "hprobe/probe.hpp"
#include "support.hpp"

namespace hprobe {
namespace {

TEST(ProbeArch, Defaults) {
  EXPECT_EQ(ProbeArch::linear(16).layer_dims, (std::vector<int>{16, 1}));
  EXPECT_EQ(ProbeArch::default_mlp(64).layer_dims, (std::vector<int>{64, 16, 4, 1}));
  EXPECT_EQ(ProbeArch::default_mlp(16).layer_dims, (std::vector<int>{16, 4, 1}));
  EXPECT_EQ(ProbeArch::mlp(8, {5, 3}).layer_dims, (std::vector<int>{8, 5, 3, 1}));
}

TEST(ProbeArch, Validation) {
  ProbeArch a = ProbeArch::linear(4);
  a.layer_dims = {4, 2};
  EXPECT_THROW(validate_arch(a), ConfigError);
  a.layer_dims = {4};
  EXPECT_THROW(validate_arch(a), ConfigError);
  EXPECT_NO_THROW(validate_arch(ProbeArch::mlp(4, {8})));
}

TEST(InitProbe, DeterministicWithZeroBias) {
  const ProbeArch arch = ProbeArch::default_mlp(16);
  const ProbeParams a = init_probe(arch, 3), b = init_probe(arch, 3), c = init_probe(arch, 4);
  EXPECT_EQ(a.flatten(), b.flatten());
  EXPECT_NE(a.flatten(), c.flatten());
  for (const auto& layer : a.layers) EXPECT_TRUE(layer.bias.isZero());
  const ProbeParams lin = init_probe(ProbeArch::linear(16), 1);
  ASSERT_EQ(lin.layers.size(), 1u);
  EXPECT_EQ(lin.layers[0].weight.rows(), 16);
  EXPECT_EQ(lin.layers[0].weight.cols(), 1);
}

TEST(InitProbe, ZeroInputGivesHalf) {
  const ProbeParams p = init_probe(ProbeArch::mlp(6, {4}, Activation::kGelu, false), 2);
  const Eigen::VectorXd prob = predict_proba(p, Eigen::MatrixXd::Zero(3, 6));
  for (double x : prob) EXPECT_EQ(x, 0.5);
}

TEST(Forward, LinearIsAffine) {
  ProbeParams p = init_probe(ProbeArch::linear(3), 5);
  p.layers[0].bias(0) = 0.25;
  Eigen::MatrixXd h(2, 3);
  h << 1, 2, 3, -1, 0.5, 0;
  const Eigen::VectorXd z = forward(p, h);
  const Eigen::VectorXd w = p.layers[0].weight.col(0);
  EXPECT_DOUBLE_EQ(z(0), h.row(0).dot(w) + 0.25);
  EXPECT_DOUBLE_EQ(z(1), h.row(1).dot(w) + 0.25);
  EXPECT_TRUE(forward(p.zeros_like(), h).isZero());
  EXPECT_THROW(forward(p, Eigen::MatrixXd::Zero(2, 4)), ShapeError);
}

// 4 -> 2 -> 1 with ReLU and no normalization, evaluated by hand.
TEST(Forward, SmallMlpMatchesHandChain) {
  ProbeParams p = init_probe(ProbeArch::mlp(4, {2}, Activation::kRelu, false), 0);
  p.layers[0].weight << 1, 0, 0, 1, -1, 0, 0, 2;
  p.layers[0].bias << 0.5, -1;
  p.layers[1].weight << 2, -1;
  p.layers[1].bias << 0.1;
  Eigen::MatrixXd h(3, 4);
  h << 1, 2, 3, 4, 0, 0, 0, 0, -1, 1, 0, 0.5;
  // Token 0: a = (1 - 3 + 0.5, 2 + 8 - 1) = (-1.5, 9) -> relu (0, 9) -> -9 + 0.1
  // Token 1: a = (0.5, -1) -> (0.5, 0) -> 1 + 0.1
  // Token 2: a = (-1 + 0.5, 1 + 1 - 1) = (-0.5, 1) -> (0, 1) -> -1 + 0.1
  const Eigen::VectorXd z = forward(p, h);
  EXPECT_DOUBLE_EQ(z(0), -8.9);
  EXPECT_DOUBLE_EQ(z(1), 1.1);
  EXPECT_DOUBLE_EQ(z(2), -0.9);
}

TEST(PredictProba, ClampedAtExtremes) {
  EXPECT_EQ(clamped_sigmoid(0.0), 0.5);
  EXPECT_LT(clamped_sigmoid(1e6), 1.0);
  EXPECT_EQ(clamped_sigmoid(1e6), clamped_sigmoid(kLogitClamp));
  EXPECT_GT(clamped_sigmoid(-1e6), 0.0);
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
  const ProbeParams p = init_probe(ProbeArch::default_mlp(16), 1);
  const Eigen::MatrixXd h = Eigen::MatrixXd::Random(5, 16);
  for (double g : backward(p, h, Eigen::VectorXd::Zero(5)).flatten()) EXPECT_EQ(g, 0.0);
}

// Gradient of sum_t u_t z_t checked parameter by parameter.
void check_backward(const ProbeArch& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  ProbeParams p = init_probe(arch, seed);
  auto theta = p.flatten();
  for (auto& x : theta) x += 0.3 * n(rng);
  p.assign(theta);
  Eigen::MatrixXd h(4, arch.input_dim());
  for (auto& x : h.reshaped()) x = n(rng);
  Eigen::VectorXd u(4);
  for (auto& x : u) x = n(rng);
  const auto g = backward(p, h, u).flatten();
  const double step = 1e-4;
  double worst = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    auto t = theta;
    t[k] += step;
    p.assign(t);
    const double up = u.dot(forward(p, h));
    t[k] -= 2 * step;
    p.assign(t);
    const double down = u.dot(forward(p, h));
    const double fd = (up - down) / (2 * step);
    worst = std::max(worst, std::abs(fd - g[k]) / std::max(1.0, std::abs(fd)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Backward, FiniteDifferencesLinear) { check_backward(ProbeArch::linear(5), 1); }
TEST(Backward, FiniteDifferencesGeluLayerNorm) { check_backward(ProbeArch::mlp(6, {4, 3}), 2); }
TEST(Backward, FiniteDifferencesGeluNoNorm) {
  check_backward(ProbeArch::mlp(6, {4}, Activation::kGelu, false), 3);
}

TEST(DefaultProbeLayer, FloorOfNinetyFivePercent) {
  EXPECT_EQ(default_probe_layer(32), 30);
  EXPECT_EQ(default_probe_layer(28), 26);
  EXPECT_EQ(default_probe_layer(1), 1);
  EXPECT_EQ(default_probe_layer(20), 19);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto dir = testing::fresh_dir("ckpt");
  ProbeParams p = init_probe(ProbeArch::default_mlp(16), 8);
  save_checkpoint(dir / "p.ckpt", p, {8, 7, "fp"});
  const Checkpoint c = load_checkpoint(dir / "p.ckpt");
  EXPECT_EQ(c.params.arch, p.arch);
  EXPECT_EQ(c.params.flatten(), p.flatten());
  EXPECT_EQ(c.info.seed, 8u);
  EXPECT_EQ(c.info.layer, 7);
  EXPECT_EQ(c.info.fingerprint, "fp");
}

TEST(Checkpoint, RejectsBadMagic) {
  const auto dir = testing::fresh_dir("ckpt_magic");
  save_checkpoint(dir / "p.ckpt", init_probe(ProbeArch::linear(2), 0), {});
  {
    std::fstream f(dir / "p.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(load_checkpoint(dir / "p.ckpt"), BadMagicError);
}

}  // namespace
}  // namespace hprobe
