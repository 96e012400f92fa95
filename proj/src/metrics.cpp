#include "hprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hprobe/error.hpp"

namespace hprobe {
namespace {

void check(std::span<const double> scores, std::span<const std::uint8_t> labels,
           bool need_both_classes) {
  if (scores.size() != labels.size()) {
    throw ShapeError("metrics: scores and labels differ in length");
  }
  if (need_both_classes) {
    const auto pos = std::count_if(labels.begin(), labels.end(),
                                   [](std::uint8_t y) { return y != 0; });
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
      throw MetricError("metric undefined: labels contain a single class");
    }
  }
}

std::vector<std::size_t> order_descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check(scores, labels, true);
  // Sweep ascending; tied groups get half credit for their own negatives.
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double negatives_below = 0.0;
  double credit = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double pos = 0.0, neg = 0.0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] ? pos : neg) += 1.0;
      ++j;
    }
    credit += pos * (negatives_below + 0.5 * neg);
    negatives_below += neg;
    n_pos += pos;
    i = j;
  }
  return credit / (n_pos * negatives_below);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels) {
  check(scores, labels, true);
  const auto idx = order_descending(scores);
  double n_pos = 0.0;
  for (auto y : labels) n_pos += y != 0;
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  std::vector<RocPoint> curve{{0.0, 0.0}};
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] ? tp : fp) += 1.0;
      ++j;
    }
    curve.push_back({fp / n_neg, tp / n_pos});
    i = j;
  }
  return curve;
}

double recall_at_fpr(std::span<const double> scores,
                     std::span<const std::uint8_t> labels, double fpr_target) {
  if (!(fpr_target >= 0.0 && fpr_target <= 1.0)) {
    throw ConfigError("metrics.fpr_target must lie in [0, 1]");
  }
  const auto curve = roc_curve(scores, labels);
  // Last vertex with fpr <= target; fpr is non-decreasing along the curve.
  std::size_t k = 0;
  while (k + 1 < curve.size() && curve[k + 1].fpr <= fpr_target) ++k;
  const RocPoint a = curve[k];
  if (a.fpr == fpr_target || k + 1 == curve.size()) return a.tpr;
  const RocPoint b = curve[k + 1];
  return a.tpr + (b.tpr - a.tpr) * (fpr_target - a.fpr) / (b.fpr - a.fpr);
}

Confusion confusion_at_threshold(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels,
                                 double threshold) {
  check(scores, labels, false);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  const double n = static_cast<double>(scores.size());
  c.accuracy = n > 0 ? static_cast<double>(c.tp + c.tn) / n : 0.0;
  if (c.tp + c.fp > 0) c.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
  c.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
  return c;
}

MetricsReport compute_metrics(std::span<const double> scores,
                              std::span<const std::uint8_t> labels,
                              double fpr_target, double threshold) {
  MetricsReport m;
  m.auc = roc_auc(scores, labels);
  m.r_at_fpr = recall_at_fpr(scores, labels, fpr_target);
  m.fpr_target = fpr_target;
  m.threshold = threshold;
  m.confusion = confusion_at_threshold(scores, labels, threshold);
  return m;
}

namespace {

template <typename T>
double entropy_impl(std::span<const T> p) {
  if (p.empty()) throw MissingDataError("entropy_score: empty distribution");
  double h = 0.0;
  for (T v : p) {
    if (v > 0) h -= static_cast<double>(v) * std::log(static_cast<double>(v));
  }
  return h;
}

}  // namespace

double entropy_score(std::span<const double> distribution) {
  return entropy_impl(distribution);
}

double entropy_score(std::span<const float> distribution) {
  return entropy_impl(distribution);
}

double perplexity_score(std::span<const double> nll_window) {
  if (nll_window.empty()) throw MissingDataError("perplexity_score: empty window");
  const double mean = std::accumulate(nll_window.begin(), nll_window.end(), 0.0) /
                      static_cast<double>(nll_window.size());
  return std::exp(mean);
}

std::vector<double> perplexity_scores(std::span<const double> nll, int window) {
  if (window < 1) throw ConfigError("perplexity window must be >= 1");
  std::vector<double> out(nll.size());
  for (std::size_t t = 0; t < nll.size(); ++t) {
    const std::size_t begin = t + 1 >= static_cast<std::size_t>(window) ? t + 1 - window : 0;
    out[t] = perplexity_score(nll.subspan(begin, t + 1 - begin));
  }
  return out;
}

std::string metrics_csv_header() {
  return "method,auc,r_at_fpr,accuracy,precision,recall,threshold,tp,fp,tn,fn\n";
}

std::string metrics_csv_row(const std::string& method, const MetricsReport& m) {
  std::ostringstream s;
  s.precision(6);
  s << method << ',' << m.auc << ',' << m.r_at_fpr << ',' << m.confusion.accuracy << ',';
  if (m.confusion.precision) s << *m.confusion.precision;
  s << ',' << m.confusion.recall << ',' << m.threshold << ',' << m.confusion.tp << ','
    << m.confusion.fp << ',' << m.confusion.tn << ',' << m.confusion.fn << '\n';
  return s.str();
}

}  // namespace hprobe
