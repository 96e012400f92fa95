#ifndef HPROBE_METRICS_HPP_
#define HPROBE_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hprobe {

struct Confusion {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  // Absent when nothing is predicted positive.
  std::optional<double> precision;
  double recall = 0.0;
};

struct MetricsReport {
  double auc = 0.0;
  double r_at_fpr = 0.0;
  double fpr_target = 0.1;
  double threshold = 0.5;
  Confusion confusion;
};

// Probability that a random positive outranks a random negative, ties
// counting one half. Throws MetricError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

// ROC vertices from (0, 0) to (1, 1), one per distinct score threshold
// (predict positive iff score >= threshold), highest threshold first.
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels);

// Recall at the most permissive threshold whose FPR <= target; when that
// vertex sits below the target, linearly interpolates toward the next one.
double recall_at_fpr(std::span<const double> scores,
                     std::span<const std::uint8_t> labels, double fpr_target = 0.1);

// Predicts positive iff score >= threshold.
Confusion confusion_at_threshold(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels,
                                 double threshold);

MetricsReport compute_metrics(std::span<const double> scores,
                              std::span<const std::uint8_t> labels,
                              double fpr_target = 0.1, double threshold = 0.5);

// Shannon entropy in nats of one next-token distribution.
double entropy_score(std::span<const double> distribution);
double entropy_score(std::span<const float> distribution);

// exp(mean NLL) over the window.
double perplexity_score(std::span<const double> nll_window);

// Per-token perplexity using the `window` most recent NLLs (truncated at the
// start of the sequence).
std::vector<double> perplexity_scores(std::span<const double> nll, int window = 1);

// Column names and row for a CSV export mirroring the results table.
// Both return complete lines, newline included.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& method, const MetricsReport& m);

}  // namespace hprobe

#endif  // HPROBE_METRICS_HPP_
