// Builders and independent reference implementations shared by the unit
// tests and the acceptance runner.
#ifndef HPROBE_TESTS_SUPPORT_HPP_
#define HPROBE_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hprobe/dataset.hpp"
#include "hprobe/loss.hpp"
#include "hprobe/probe.hpp"

namespace hprobe::testing {

// Random sequence with spans, NLL and paired distributions.
inline TokenSequence random_sequence(std::mt19937_64& rng, const std::string& id, int n, int d,
                                     const std::vector<int>& layers, int vocab) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TokenSequence seq;
  seq.id = id;
  seq.num_tokens = n;
  seq.mask.assign(n, 1);
  for (int t = 0; t < n; ++t) {
    if (u(rng) < 0.15) seq.mask[t] = 0;
  }
  seq.mask[0] = 1;
  int t = 0;
  while (t < n) {
    if (u(rng) < 0.3) {
      const int len = 1 + static_cast<int>(rng() % 3);
      const int end = std::min(n - 1, t + len - 1);
      seq.spans.push_back({t, end, u(rng) < 0.5 ? 1 : 0});
      t = end + 2;
    } else {
      ++t;
    }
  }
  seq.token_labels = labels_from_spans(seq.spans, n);
  for (int l : layers) {
    FloatMatrix m(n, d);
    for (int i = 0; i < n * d; ++i) m.data()[i] = static_cast<float>(z(rng));
    seq.states.emplace(l, std::move(m));
  }
  std::vector<double> nll(n);
  for (auto& x : nll) x = 3.0 * u(rng);
  seq.nll = nll;
  if (vocab > 0) {
    FloatMatrix base(n, vocab), adapted(n, vocab);
    for (int r = 0; r < n; ++r) {
      double sb = 0.0, sa = 0.0;
      for (int c = 0; c < vocab; ++c) {
        base(r, c) = static_cast<float>(0.05 + u(rng));
        adapted(r, c) = static_cast<float>(0.05 + u(rng));
        sb += base(r, c);
        sa += adapted(r, c);
      }
      for (int c = 0; c < vocab; ++c) {
        base(r, c) = static_cast<float>(base(r, c) / sb);
        adapted(r, c) = static_cast<float>(adapted(r, c) / sa);
      }
    }
    seq.dist_base = base;
    seq.dist_adapted = adapted;
  }
  return seq;
}

inline Dataset random_dataset(std::uint64_t seed, int num_sequences, int n, int d,
                              std::vector<int> layers, int vocab = 6) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.meta.hidden_dim = d;
  ds.meta.num_layers = *std::max_element(layers.begin(), layers.end());
  ds.meta.layers = layers;
  if (vocab > 0) ds.meta.vocab_size = vocab;
  for (int s = 0; s < num_sequences; ++s) {
    ds.sequences.push_back(random_sequence(rng, "s" + std::to_string(s), n, d, layers, vocab));
  }
  return ds;
}

// Total loss of `params` over `seqs` at `layer`, and its gradient flattened
// in ProbeParams::flatten() order.
inline double loss_and_gradient(const ProbeParams& params, const std::vector<TokenSequence>& seqs,
                                int layer, const LossConfig& cfg, std::vector<double>* grad) {
  std::vector<Eigen::MatrixXd> states;
  std::vector<Eigen::VectorXd> logits;
  for (const auto& s : seqs) {
    states.push_back(s.states.at(layer).cast<double>());
    logits.push_back(forward(params, states.back()));
  }
  std::vector<LossInput> batch;
  for (std::size_t i = 0; i < seqs.size(); ++i) batch.push_back({&seqs[i], &logits[i]});
  std::vector<Eigen::VectorXd> dz;
  const LossBreakdown lb = total_loss(batch, cfg, grad ? &dz : nullptr);
  if (grad) {
    std::vector<double> total(params.num_parameters(), 0.0);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const auto g = backward(params, states[i], dz[i]).flatten();
      for (std::size_t k = 0; k < g.size(); ++k) total[k] += g[k];
    }
    *grad = total;
  }
  return lb.total;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

inline std::vector<double> central_differences(const ProbeParams& params,
                                               const std::vector<TokenSequence>& seqs, int layer,
                                               const LossConfig& cfg, double h = 1e-6) {
  std::vector<double> theta = params.flatten();
  std::vector<double> out(theta.size());
  ProbeParams p = params;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double keep = theta[k];
    theta[k] = keep + h;
    p.assign(theta);
    const double up = loss_and_gradient(p, seqs, layer, cfg, nullptr);
    theta[k] = keep - h;
    p.assign(theta);
    const double down = loss_and_gradient(p, seqs, layer, cfg, nullptr);
    theta[k] = keep;
    out[k] = (up - down) / (2.0 * h);
  }
  return out;
}

// O(n^2) pairwise AUC with ties counting one half.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Enumerates every threshold (each distinct score and +inf), counts the
// operating point directly, and interpolates between the last point at or
// below the target FPR and the first point above it.
inline double enumerated_recall_at_fpr(const std::vector<double>& s,
                                       const std::vector<std::uint8_t>& y, double target) {
  std::set<double> thresholds(s.begin(), s.end());
  std::vector<std::pair<double, double>> points;  // (fpr, tpr)
  double pos = 0.0, neg = 0.0;
  for (auto label : y) (label ? pos : neg) += 1.0;
  auto point_at = [&](double thr) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= thr) (y[i] ? tp : fp) += 1.0;
    }
    return std::make_pair(fp / neg, tp / pos);
  };
  points.push_back(point_at(std::numeric_limits<double>::infinity()));
  for (double thr : thresholds) points.push_back(point_at(thr));
  std::pair<double, double> below{-1.0, -1.0};
  std::pair<double, double> above{2.0, 2.0};
  for (const auto& p : points) {
    if (p.first <= target) {
      if (p.first > below.first || (p.first == below.first && p.second > below.second)) below = p;
    } else if (p.first < above.first || (p.first == above.first && p.second < above.second)) {
      above = p;
    }
  }
  if (below.first == target || above.first > 1.0) return below.second;
  return below.second +
         (target - below.first) / (above.first - below.first) * (above.second - below.second);
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hprobe_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace hprobe::testing

#endif  // HPROBE_TESTS_SUPPORT_HPP_
