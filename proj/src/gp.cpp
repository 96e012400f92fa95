#include "hprobe/gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "hprobe/error.hpp"

namespace hprobe {

void validate_gp_hyper(const GpHyper& h) {
  if (!(h.length_scale > 0.0)) throw ConfigError("gp.length_scale must be > 0");
  if (!(h.signal_variance > 0.0)) throw ConfigError("gp.signal_variance must be > 0");
  if (!(h.noise_variance >= 0.0)) throw ConfigError("gp.noise_variance must be >= 0");
}

GaussianProcess::GaussianProcess(GpHyper hyper, int num_layers)
    : hyper_(hyper), num_layers_(num_layers) {
  validate_gp_hyper(hyper_);
  if (num_layers < 1) throw ConfigError("gp: num_layers must be >= 1");
}

double GaussianProcess::input(int layer) const {
  if (num_layers_ == 1) return 0.0;
  return static_cast<double>(layer - 1) / (num_layers_ - 1);
}

double GaussianProcess::kernel(int a, int b) const {
  return static_cast<double>(kernel_ld(a, b));
}

long double GaussianProcess::kernel_ld(int a, int b) const {
  const long double x_a = num_layers_ == 1 ? 0.0L : (a - 1.0L) / (num_layers_ - 1);
  const long double x_b = num_layers_ == 1 ? 0.0L : (b - 1.0L) / (num_layers_ - 1);
  const long double d = (x_a - x_b) / hyper_.length_scale;
  return hyper_.signal_variance * std::exp(-0.5L * d * d);
}

void GaussianProcess::set_hyper(const GpHyper& hyper) {
  validate_gp_hyper(hyper);
  hyper_ = hyper;
  fit(std::move(obs_));
}

void GaussianProcess::fit(std::vector<GpObservation> observations) {
  obs_ = std::move(observations);
  const auto n = static_cast<Eigen::Index>(obs_.size());
  jitter_ = 0.0;
  alpha_.resize(0);
  if (n == 0) return;
  Matrix k(n, n);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = obs_[i].value;
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = kernel_ld(obs_[i].layer, obs_[j].layer);
    k(i, i) += hyper_.noise_variance;
  }
  static constexpr double kLadder[] = {0.0, 1e-12, 1e-10, 1e-8, 1e-6};
  for (double rel : kLadder) {
    const double jitter = rel * hyper_.signal_variance;
    Matrix kj = k;
    kj.diagonal().array() += jitter;
    chol_.compute(kj);
    if (chol_.info() == Eigen::Success) {
      jitter_ = jitter;
      alpha_ = chol_.solve(y);
      return;
    }
  }
  throw NumericError("gp: Gram matrix not positive definite after jitter " +
                     std::to_string(kLadder[std::size(kLadder) - 1]));
}

GpPrediction GaussianProcess::predict(int layer) const {
  const double prior = hyper_.signal_variance;
  if (obs_.empty()) return {0.0, std::sqrt(prior)};
  const auto n = static_cast<Eigen::Index>(obs_.size());
  Vector ks(n);
  for (Eigen::Index i = 0; i < n; ++i) ks(i) = kernel_ld(layer, obs_[i].layer);
  const auto mean = static_cast<double>(ks.dot(alpha_));
  const Vector v = chol_.matrixL().solve(ks);
  const long double var = std::max(static_cast<long double>(prior) - v.squaredNorm(), 0.0L);
  return {mean, static_cast<double>(std::sqrt(var))};
}

std::vector<GpPrediction> GaussianProcess::predict(std::span<const int> layers) const {
  std::vector<GpPrediction> out;
  out.reserve(layers.size());
  for (int l : layers) out.push_back(predict(l));
  return out;
}

double GaussianProcess::log_marginal_likelihood() const {
  if (obs_.empty()) return 0.0;
  const auto n = static_cast<double>(obs_.size());
  long double y_alpha = 0.0L;
  for (std::size_t i = 0; i < obs_.size(); ++i) {
    y_alpha += obs_[i].value * alpha_(static_cast<Eigen::Index>(i));
  }
  const long double log_det = 2.0L * chol_.matrixLLT().diagonal().array().log().sum();
  return static_cast<double>(-0.5L * y_alpha - 0.5L * log_det) -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

GpHyper refresh_hyper(GaussianProcess& gp) {
  static constexpr double kLengths[] = {0.05, 0.1, 0.2, 0.3, 0.5, 1.0};
  static constexpr double kSignals[] = {0.1, 0.3, 1.0, 3.0};
  const GpHyper start = gp.hyper();
  GpHyper best = start;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double ls : kLengths) {
    for (double sv : kSignals) {
      GpHyper h{ls, sv, start.noise_variance};
      try {
        gp.set_hyper(h);
      } catch (const NumericError&) {
        continue;
      }
      const double lml = gp.log_marginal_likelihood();
      if (lml > best_lml) {
        best_lml = lml;
        best = h;
      }
    }
  }
  gp.set_hyper(best);
  return best;
}

double expected_improvement(const GpPrediction& p, double best) {
  const double diff = p.mean - best;
  if (p.sd <= kEiSdFloor) return std::max(diff, 0.0);
  const double z = diff / p.sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(diff * cdf + p.sd * pdf, 0.0);
}

double ucb(const GpPrediction& p, double beta) {
  if (beta < 0.0) throw ConfigError("ucb: beta must be >= 0");
  return p.mean + std::sqrt(beta) * p.sd;
}

double ucb_beta(int num_candidates, int t, double delta) {
  const double tt = static_cast<double>(t);
  return 2.0 * std::log(num_candidates * tt * tt * std::numbers::pi * std::numbers::pi /
                        (6.0 * delta));
}

}  // namespace hprobe
