#include "hprobe/layer_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "hprobe/error.hpp"
#include "hprobe/probe.hpp"

namespace hprobe {

void validate_layer_model_params(const LayerModelParams& p) {
  auto fail = [](const std::string& msg) { throw ConfigError("layer_model." + msg); };
  if (!(p.lora_rank >= 1.0)) fail("lora_rank must be >= 1");
  if (!(p.alpha >= 0.0)) fail("alpha must be >= 0");
  if (p.num_layers < 1) fail("num_layers must be >= 1");
  if (!(p.lambda_perturb >= 0.0)) fail("lambda_perturb must be >= 0");
  if (!(p.w >= 0.0 && p.w <= 1.0)) fail("w must lie in [0, 1]");
}

double diagonal_gaussian_kl(std::span<const double> mean_p, std::span<const double> var_p,
                            std::span<const double> mean_q, std::span<const double> var_q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < mean_p.size(); ++i) {
    const double d = mean_p[i] - mean_q[i];
    kl += 0.5 * (std::log(var_q[i] / var_p[i]) + (var_p[i] + d * d) / var_q[i] - 1.0);
  }
  return kl;
}

double estimate_separability(const Dataset& ds, int layer) {
  if (!ds.has_layer(layer)) {
    throw MissingDataError("layer " + std::to_string(layer) + " not in dataset");
  }
  const int d = ds.meta.hidden_dim;
  Eigen::VectorXd sum[2] = {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)};
  Eigen::VectorXd sq[2] = {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)};
  double count[2] = {0.0, 0.0};
  for (const auto& seq : ds.sequences) {
    const auto& m = seq.states.at(layer);
    for (int t = 0; t < seq.num_tokens; ++t) {
      if (!seq.mask[t]) continue;
      const int c = seq.token_labels[t] ? 1 : 0;
      const Eigen::VectorXd h = m.row(t).cast<double>().transpose();
      sum[c] += h;
      sq[c] += h.cwiseProduct(h);
      count[c] += 1.0;
    }
  }
  if (count[0] == 0.0 || count[1] == 0.0) {
    throw MissingDataError("estimate_separability: a class is absent at layer " +
                           std::to_string(layer));
  }
  constexpr double kVarFloor = 1e-6;
  std::vector<double> mean[2], var[2];
  for (int c = 0; c < 2; ++c) {
    mean[c].resize(d);
    var[c].resize(d);
    for (int i = 0; i < d; ++i) {
      const double mu = sum[c](i) / count[c];
      mean[c][i] = mu;
      var[c][i] = std::max(sq[c](i) / count[c] - mu * mu, kVarFloor);
    }
  }
  // Real (label 0) first: KL(p(h | real) || p(h | hallucination)).
  return std::max(0.0, diagonal_gaussian_kl(mean[0], var[0], mean[1], var[1]));
}

double performance_model(int layer, double separability, const LayerModelParams& p) {
  const double capacity = static_cast<double>(layer) / (p.num_layers * p.lora_rank);
  return sigmoid(p.beta0 + p.beta1 * separability - p.gamma_capacity * capacity -
                 p.eta * p.alpha);
}

double lm_loss_model(int /*layer*/, const LayerModelParams& p, double separability) {
  return p.lm_loss_base + p.lambda_perturb * p.alpha * separability;
}

double LayerRecord::performance() const {
  if (perf_empirical) return *perf_empirical;
  if (perf_model) return *perf_model;
  throw MissingDataError("layer record " + std::to_string(layer) + " has no performance");
}

LayerProfile normalize_and_utility(LayerProfile profile, double w) {
  if (profile.records.empty()) throw MissingDataError("normalize_and_utility: empty profile");
  if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("layer_model.w must lie in [0, 1]");
  double a_min = profile.records.front().performance(), a_max = a_min;
  double l_min = profile.records.front().lm_loss, l_max = l_min;
  for (const auto& r : profile.records) {
    a_min = std::min(a_min, r.performance());
    a_max = std::max(a_max, r.performance());
    l_min = std::min(l_min, r.lm_loss);
    l_max = std::max(l_max, r.lm_loss);
  }
  for (auto& r : profile.records) {
    r.perf_norm = a_max > a_min ? (r.performance() - a_min) / (a_max - a_min) : 0.5;
    r.lm_norm = l_max > l_min ? (r.lm_loss - l_min) / (l_max - l_min) : 0.5;
    r.utility = w * r.perf_norm - (1.0 - w) * r.lm_norm;
  }
  return profile;
}

int best_layer(const LayerProfile& profile) {
  if (profile.records.empty()) throw MissingDataError("best_layer: empty profile");
  const LayerRecord* best = &profile.records.front();
  for (const auto& r : profile.records) {
    if (r.utility > best->utility ||
        (r.utility == best->utility && r.layer < best->layer)) {
      best = &r;
    }
  }
  return best->layer;
}

LayerProfile model_profile(std::span<const double> separability,
                           const LayerModelParams& p) {
  LayerProfile profile;
  for (std::size_t i = 0; i < separability.size(); ++i) {
    LayerRecord r;
    r.layer = static_cast<int>(i) + 1;
    r.separability = separability[i];
    r.perf_model = performance_model(r.layer, r.separability, p);
    r.lm_loss = lm_loss_model(r.layer, p, r.separability);
    profile.records.push_back(r);
  }
  return normalize_and_utility(std::move(profile), p.w);
}

LayerModelParams fit_performance_model(const LayerProfile& profile,
                                       LayerModelParams start) {
  std::vector<const LayerRecord*> rows;
  for (const auto& r : profile.records) {
    if (r.perf_empirical && *r.perf_empirical > 0.0 && *r.perf_empirical < 1.0) {
      rows.push_back(&r);
    }
  }
  if (rows.size() < 3) {
    throw MissingDataError("fit_performance_model: need >= 3 usable records");
  }
  Eigen::MatrixXd X(rows.size(), 3);
  Eigen::VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double a = *rows[i]->perf_empirical;
    X(i, 0) = 1.0;
    X(i, 1) = rows[i]->separability;
    X(i, 2) = -static_cast<double>(rows[i]->layer) / (start.num_layers * start.lora_rank);
    y(i) = std::log(a / (1.0 - a)) + start.eta * start.alpha;
  }
  const Eigen::VectorXd coef = X.colPivHouseholderQr().solve(y);
  start.beta0 = coef(0);
  start.beta1 = coef(1);
  start.gamma_capacity = coef(2);
  return start;
}

std::string profile_csv(const LayerProfile& profile) {
  std::ostringstream s;
  s.precision(10);
  s << "layer,separability,perf_model,perf_empirical,lm_loss,perf_norm,lm_norm,utility\n";
  for (const auto& r : profile.records) {
    s << r.layer << ',' << r.separability << ',';
    if (r.perf_model) s << *r.perf_model;
    s << ',';
    if (r.perf_empirical) s << *r.perf_empirical;
    s << ',' << r.lm_loss << ',' << r.perf_norm << ',' << r.lm_norm << ',' << r.utility
      << '\n';
  }
  return s.str();
}

}  // namespace hprobe
