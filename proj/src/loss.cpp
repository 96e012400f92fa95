#include "hprobe/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hprobe/error.hpp"
#include "hprobe/probe.hpp"

namespace hprobe {

void validate_loss_config(const LossConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError("loss." + msg); };
  if (!(c.gamma_focal >= 0.0)) fail("gamma_focal must be >= 0");
  if (!(c.alpha_pos > 0.0 && c.alpha_pos < 1.0)) fail("alpha_pos must lie in (0, 1)");
  if (!(c.lambda_soft >= 0.0)) fail("lambda_soft must be >= 0");
  if (!(c.lambda_span >= 0.0)) fail("lambda_span must be >= 0");
  if (!(c.lambda_sparse >= 0.0)) fail("lambda_sparse must be >= 0");
  if (!(c.lambda_kl >= 0.0)) fail("lambda_kl must be >= 0");
  if (std::isnan(c.tau)) fail("tau must be a number or +/-inf");
  if (!(c.sample_weight_default >= 0.0)) fail("sample_weight_default must be >= 0");
}

namespace {

// Focal term for one binary decision given p_t (probability of the true
// class) and q = 1 - p_t, both computed without cancellation.
double focal_value(double p_t, double q, double alpha, double gamma, double w) {
  return alpha * std::pow(q, gamma) * -std::log(std::max(p_t, kLogFloor)) * w;
}

// Value and d/dz of the focal term for a logit z with label y.
double focal_term(double z, int y, double alpha, double gamma, double w,
                  double* dz) {
  const double zc = std::clamp(z, -kLogitClamp, kLogitClamp);
  const double s = y == 1 ? 1.0 : -1.0;
  const double p_t = sigmoid(s * zc);
  const double q = sigmoid(-s * zc);
  if (dz != nullptr) {
    if (std::abs(z) > kLogitClamp) {
      *dz = 0.0;
    } else {
      const double floored = std::max(p_t, kLogFloor);
      double g = gamma > 0.0 ? gamma * std::pow(q, gamma) * p_t * std::log(floored) : 0.0;
      if (p_t >= kLogFloor) g -= std::pow(q, gamma + 1.0);
      *dz = s * alpha * w * g;
    }
  }
  return focal_value(p_t, q, alpha, gamma, w);
}

void check_lengths(std::size_t n, std::size_t labels, std::size_t mask,
                   std::size_t weights) {
  if (labels != n || mask != n || (weights != 0 && weights != n)) {
    throw ShapeError("loss: inputs have mismatched lengths");
  }
}

}  // namespace

double focal_loss(std::span<const double> probs,
                  std::span<const std::uint8_t> labels,
                  std::span<const std::uint8_t> mask,
                  std::span<const double> weights, const LossConfig& cfg) {
  check_lengths(probs.size(), labels.size(), mask.size(), weights.size());
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!mask[i]) continue;
    const bool pos = labels[i] == 1;
    const double p_t = pos ? probs[i] : 1.0 - probs[i];
    const double q = pos ? 1.0 - probs[i] : probs[i];
    const double alpha = pos ? cfg.alpha_pos : 1.0 - cfg.alpha_pos;
    const double w = weights.empty() ? cfg.sample_weight_default : weights[i];
    sum += focal_value(p_t, q, alpha, cfg.gamma_focal, w);
    ++count;
  }
  if (count == 0) throw MissingDataError("focal_loss: mask selects no tokens");
  return sum / count;
}

double focal_loss_from_logits(std::span<const double> logits,
                              std::span<const std::uint8_t> labels,
                              std::span<const std::uint8_t> mask,
                              std::span<const double> weights,
                              const LossConfig& cfg, std::span<double> grad) {
  check_lengths(logits.size(), labels.size(), mask.size(), weights.size());
  if (!grad.empty() && grad.size() != logits.size()) {
    throw ShapeError("focal_loss: gradient buffer has the wrong length");
  }
  const int count = static_cast<int>(std::count_if(
      mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
  if (count == 0) throw MissingDataError("focal_loss: mask selects no tokens");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) {
      if (!grad.empty()) grad[i] = 0.0;
      continue;
    }
    const int y = labels[i] == 1 ? 1 : 0;
    const double alpha = y ? cfg.alpha_pos : 1.0 - cfg.alpha_pos;
    const double w = weights.empty() ? cfg.sample_weight_default : weights[i];
    double dz = 0.0;
    sum += focal_term(logits[i], y, alpha, cfg.gamma_focal, w,
                      grad.empty() ? nullptr : &dz);
    if (!grad.empty()) grad[i] = dz / count;
  }
  return sum / count;
}

namespace {

// Softmax weights of lambda * z over the span; returns the aggregate.
double aggregate_with_weights(std::span<const double> logits,
                              const SpanAnnotation& span, double lambda_soft,
                              std::vector<double>& weights) {
  if (span.start < 0 || span.end < span.start ||
      span.end >= static_cast<int>(logits.size())) {
    throw ShapeError("span_aggregate: span [" + std::to_string(span.start) +
                     ", " + std::to_string(span.end) + "] out of bounds");
  }
  const auto z = logits.subspan(span.start, span.length());
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (double v : z) max_scaled = std::max(max_scaled, lambda_soft * v);
  weights.resize(z.size());
  double norm = 0.0;
  for (std::size_t t = 0; t < z.size(); ++t) {
    weights[t] = std::exp(lambda_soft * z[t] - max_scaled);
    norm += weights[t];
  }
  double agg = 0.0;
  for (std::size_t t = 0; t < z.size(); ++t) {
    weights[t] /= norm;
    agg += weights[t] * z[t];
  }
  return agg;
}

}  // namespace

double span_aggregate(std::span<const double> logits, const SpanAnnotation& span,
                      double lambda_soft) {
  std::vector<double> w;
  return aggregate_with_weights(logits, span, lambda_soft, w);
}

SpanLossResult span_loss(std::span<const double> logits,
                         const std::vector<SpanAnnotation>& spans,
                         const LossConfig& cfg, std::span<double> grad) {
  if (!grad.empty()) {
    if (grad.size() != logits.size()) {
      throw ShapeError("span_loss: gradient buffer has the wrong length");
    }
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  if (spans.empty()) return {};
  const double inv = 1.0 / static_cast<double>(spans.size());
  std::vector<double> w;
  double sum = 0.0;
  for (const auto& span : spans) {
    const double agg = aggregate_with_weights(logits, span, cfg.lambda_soft, w);
    double d_agg = 0.0;
    sum += focal_term(agg, span.label == 1 ? 1 : 0, 1.0, cfg.gamma_focal, 1.0,
                      grad.empty() ? nullptr : &d_agg);
    if (!grad.empty() && d_agg != 0.0) {
      for (int t = span.start; t <= span.end; ++t) {
        const double wt = w[t - span.start];
        grad[t] += inv * d_agg * wt * (1.0 + cfg.lambda_soft * (logits[t] - agg));
      }
    }
  }
  return {sum * inv, true};
}

double sparse_loss(std::span<const double> logits,
                   std::span<const std::uint8_t> mask, std::span<double> grad) {
  if (mask.size() != logits.size()) throw ShapeError("sparse_loss: length mismatch");
  if (!grad.empty() && grad.size() != logits.size()) {
    throw ShapeError("sparse_loss: gradient buffer has the wrong length");
  }
  if (logits.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(logits.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const double p = mask[t] ? sigmoid(logits[t]) : 0.0;
    sum += p;
    if (!grad.empty()) grad[t] = inv * p * (1.0 - p);
  }
  return sum * inv;
}

double kl_loss(const FloatMatrix& base, const FloatMatrix& adapted,
               std::span<const std::uint8_t> mask) {
  if (base.rows() != adapted.rows() || base.cols() != adapted.cols()) {
    throw ShapeError("kl_loss: dist_base and dist_adapted shapes differ");
  }
  if (static_cast<Eigen::Index>(mask.size()) != base.rows()) {
    throw ShapeError("kl_loss: mask length differs from distribution rows");
  }
  double sum = 0.0;
  for (Eigen::Index t = 0; t < base.rows(); ++t) {
    if (!mask[t]) continue;
    for (Eigen::Index v = 0; v < base.cols(); ++v) {
      const double pb = base(t, v);
      if (pb <= 0.0) continue;
      const double pa = adapted(t, v);
      sum += pb * (std::log(std::max(pb, kLogFloor)) - std::log(std::max(pa, kLogFloor)));
    }
  }
  return sum;
}

MaskedSpans apply_high_loss_mask(const std::vector<SpanAnnotation>& spans,
                                 const std::optional<std::vector<double>>& nll,
                                 double tau) {
  MaskedSpans out;
  if (tau == std::numeric_limits<double>::infinity()) {
    out.kept = spans;
    return out;
  }
  if (tau == -std::numeric_limits<double>::infinity()) {
    out.masked = spans;
    return out;
  }
  if (!nll) {
    throw MissingDataError("high-loss masking: tau is finite but nll is absent");
  }
  for (const auto& s : spans) {
    if (s.start < 0 || s.end >= static_cast<int>(nll->size()) || s.end < s.start) {
      throw ShapeError("high-loss masking: span out of nll bounds");
    }
    const double max_nll =
        *std::max_element(nll->begin() + s.start, nll->begin() + s.end + 1);
    (max_nll > tau ? out.masked : out.kept).push_back(s);
  }
  return out;
}

LossBreakdown total_loss(std::span<const LossInput> batch, const LossConfig& cfg,
                         std::vector<Eigen::VectorXd>* grads) {
  if (batch.empty()) throw MissingDataError("total_loss: empty batch");
  const std::size_t B = batch.size();

  struct PerSequence {
    std::vector<std::uint8_t> focal_mask;
    std::vector<SpanAnnotation> spans;
    bool has_focal = false;
  };
  std::vector<PerSequence> prep(B);
  LossBreakdown out;
  int focal_count = 0;
  int span_count = 0;
  bool all_have_dist = true;
  for (std::size_t i = 0; i < B; ++i) {
    const TokenSequence& seq = *batch[i].sequence;
    if (batch[i].logits->size() != seq.num_tokens) {
      throw ShapeError("total_loss: logits length differs from num_tokens for '" +
                       seq.id + "'");
    }
    MaskedSpans ms = apply_high_loss_mask(seq.spans, seq.nll, cfg.tau);
    out.masked_span_count += ms.count();
    prep[i].focal_mask = seq.mask;
    for (const auto& s : ms.masked) {
      for (int t = s.start; t <= s.end; ++t) prep[i].focal_mask[t] = 0;
    }
    prep[i].has_focal = std::any_of(prep[i].focal_mask.begin(),
                                    prep[i].focal_mask.end(),
                                    [](std::uint8_t m) { return m != 0; });
    focal_count += prep[i].has_focal;
    prep[i].spans = std::move(ms.kept);
    span_count += !prep[i].spans.empty();
    all_have_dist = all_have_dist && seq.dist_base && seq.dist_adapted;
  }
  if (cfg.use_focal && focal_count == 0) {
    throw MissingDataError("total_loss: no unmasked tokens for the focal term");
  }
  if (cfg.lambda_kl > 0.0 && !all_have_dist) {
    throw MissingDataError("total_loss: lambda_kl > 0 but paired distributions are missing");
  }

  if (grads != nullptr) {
    grads->resize(B);
    for (std::size_t i = 0; i < B; ++i) {
      (*grads)[i] = Eigen::VectorXd::Zero(batch[i].logits->size());
    }
  }
  std::vector<double> g;
  for (std::size_t i = 0; i < B; ++i) {
    const TokenSequence& seq = *batch[i].sequence;
    const std::span<const double> z(batch[i].logits->data(),
                                    static_cast<std::size_t>(batch[i].logits->size()));
    const bool want = grads != nullptr;
    g.assign(want ? z.size() : 0, 0.0);
    auto add = [&](double scale) {
      if (!want) return;
      for (std::size_t t = 0; t < z.size(); ++t) (*grads)[i](t) += scale * g[t];
    };

    if (cfg.use_focal && prep[i].has_focal) {
      out.focal += focal_loss_from_logits(z, seq.token_labels, prep[i].focal_mask,
                                          {}, cfg, g) / focal_count;
      add(1.0 / focal_count);
    }
    if (!prep[i].spans.empty()) {
      out.span += span_loss(z, prep[i].spans, cfg, g).value / span_count;
      add(cfg.lambda_span / span_count);
    }
    out.sparse += sparse_loss(z, seq.mask, g) / static_cast<double>(B);
    add(cfg.lambda_sparse / static_cast<double>(B));
    if (all_have_dist) {
      out.kl += kl_loss(*seq.dist_base, *seq.dist_adapted, seq.mask) /
                static_cast<double>(B);
    }
  }
  out.span_active = span_count > 0;
  out.kl_active = all_have_dist;
  out.total = out.focal + cfg.lambda_span * out.span +
              cfg.lambda_sparse * out.sparse + cfg.lambda_kl * out.kl;
  if (!std::isfinite(out.total)) {
    throw NumericError("total_loss: non-finite total");
  }
  return out;
}

}  // namespace hprobe
