#ifndef HPROBE_LOSS_HPP_
#define HPROBE_LOSS_HPP_

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hprobe/dataset.hpp"

namespace hprobe {

// Floor applied inside every log.
inline constexpr double kLogFloor = 1e-7;

struct LossConfig {
  double gamma_focal = 2.0;
  double alpha_pos = 0.25;
  double lambda_soft = 1.0;
  double lambda_span = 0.5;
  double lambda_sparse = 0.01;
  double lambda_kl = 0.1;
  // Spans whose max token NLL exceeds tau are dropped. +inf disables.
  double tau = std::numeric_limits<double>::infinity();
  double sample_weight_default = 1.0;
  // false drops the focal term from the total (used by ablations).
  bool use_focal = true;
};

// Throws ConfigError naming the violated bound.
void validate_loss_config(const LossConfig& cfg);

// total == focal + lambda_span * span + lambda_sparse * sparse
//          + lambda_kl * kl, with focal reported as 0 when use_focal is off.
struct LossBreakdown {
  double focal = 0.0;
  double span = 0.0;
  double sparse = 0.0;
  double kl = 0.0;
  double total = 0.0;
  int masked_span_count = 0;
  bool span_active = false;
  bool kl_active = false;
};

// Mean over unmasked tokens of alpha_i (1 - p_t)^gamma BCE(p_i, y_i) w_i.
// `weights` may be empty (every weight = cfg.sample_weight_default).
// Throws ShapeError on length mismatch, MissingDataError on an empty mask.
double focal_loss(std::span<const double> probs,
                  std::span<const std::uint8_t> labels,
                  std::span<const std::uint8_t> mask,
                  std::span<const double> weights, const LossConfig& cfg);

// Same value from logits (probabilities via the clamped sigmoid). When
// `grad` is non-empty it receives d(value)/d(logit) per token.
double focal_loss_from_logits(std::span<const double> logits,
                              std::span<const std::uint8_t> labels,
                              std::span<const std::uint8_t> mask,
                              std::span<const double> weights,
                              const LossConfig& cfg, std::span<double> grad = {});

// Softmax(lambda_soft * z)-weighted mean of the span's logits.
double span_aggregate(std::span<const double> logits, const SpanAnnotation& span,
                      double lambda_soft);

struct SpanLossResult {
  double value = 0.0;
  bool active = false;  // false when there are no spans
};

// Per-span focal loss on sigmoid(aggregated logit), averaged over spans.
SpanLossResult span_loss(std::span<const double> logits,
                         const std::vector<SpanAnnotation>& spans,
                         const LossConfig& cfg, std::span<double> grad = {});

// sum_t sigmoid(z_t) m_t / n for one sequence of n positions.
double sparse_loss(std::span<const double> logits,
                   std::span<const std::uint8_t> mask, std::span<double> grad = {});

// sum over unmasked tokens of KL(base || adapted) for one sequence.
double kl_loss(const FloatMatrix& dist_base, const FloatMatrix& dist_adapted,
               std::span<const std::uint8_t> mask);

struct MaskedSpans {
  std::vector<SpanAnnotation> kept;
  std::vector<SpanAnnotation> masked;
  int count() const { return static_cast<int>(masked.size()); }
};

// Drops spans whose maximum per-token NLL exceeds tau. Throws
// MissingDataError when tau is finite and nll is absent.
MaskedSpans apply_high_loss_mask(const std::vector<SpanAnnotation>& spans,
                                 const std::optional<std::vector<double>>& nll,
                                 double tau);

struct LossInput {
  const TokenSequence* sequence;
  const Eigen::VectorXd* logits;
};

// Full objective over a batch. Token terms are averaged within a sequence,
// then across sequences. When `grads` is given it is resized to the batch
// and holds d(total)/d(logits) per sequence.
LossBreakdown total_loss(std::span<const LossInput> batch, const LossConfig& cfg,
                         std::vector<Eigen::VectorXd>* grads = nullptr);

}  // namespace hprobe

#endif  // HPROBE_LOSS_HPP_
