#ifndef HPROBE_LAYER_MODEL_HPP_
#define HPROBE_LAYER_MODEL_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hprobe/dataset.hpp"

namespace hprobe {

// Coefficients of the layer-position / probe-performance response model.
struct LayerModelParams {
  double beta0 = 0.0;
  double beta1 = 1.0;
  double gamma_capacity = 1.0;  // weight of the l / (L r) capacity conflict
  double eta = 1.0;
  double lora_rank = 8.0;
  double alpha = 0.5;  // probe loss weight
  int num_layers = 32;
  double lambda_perturb = 0.1;
  double lm_loss_base = 2.0;
  double w = 0.8;  // performance / robustness trade-off, in [0, 1]
};

void validate_layer_model_params(const LayerModelParams& p);

// KL(real || hallucinated) between diagonal-Gaussian fits of the unmasked
// token states at `layer`; variances floored at 1e-6. Throws
// MissingDataError when the layer or a class is absent.
double estimate_separability(const Dataset& ds, int layer);

// Closed-form diagonal-Gaussian KL(N(mu_p, var_p) || N(mu_q, var_q)).
double diagonal_gaussian_kl(std::span<const double> mean_p,
                            std::span<const double> var_p,
                            std::span<const double> mean_q,
                            std::span<const double> var_q);

// sigmoid(beta0 + beta1 S - gamma l / (L r) - eta alpha)
double performance_model(int layer, double separability, const LayerModelParams& p);

// L0 + lambda alpha S
double lm_loss_model(int layer, const LayerModelParams& p, double separability);

struct LayerRecord {
  int layer = 0;
  double separability = 0.0;
  std::optional<double> perf_model;
  std::optional<double> perf_empirical;
  double lm_loss = 0.0;
  double perf_norm = 0.0;
  double lm_norm = 0.0;
  double utility = 0.0;

  // Empirical performance when measured, else the model value.
  double performance() const;
};

struct LayerProfile {
  std::vector<LayerRecord> records;
};

// Min-max normalizes performance and LM loss over the present records
// (degenerate ranges map to 0.5) and fills U = w A~ - (1 - w) L~.
LayerProfile normalize_and_utility(LayerProfile profile, double w);

// argmax U, ties toward the smaller layer index.
int best_layer(const LayerProfile& profile);

// Model profile for every layer given per-layer separabilities (index 0 is
// layer 1), normalized with p.w.
LayerProfile model_profile(std::span<const double> separability,
                           const LayerModelParams& p);

// Least-squares fit of (beta0, beta1, gamma_capacity) on logit(A_empirical),
// holding eta, alpha, lora_rank and num_layers fixed. Needs >= 3 records
// with empirical performance strictly inside (0, 1).
LayerModelParams fit_performance_model(const LayerProfile& profile,
                                       LayerModelParams start);

std::string profile_csv(const LayerProfile& profile);

}  // namespace hprobe

#endif  // HPROBE_LAYER_MODEL_HPP_
