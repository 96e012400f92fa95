#ifndef HPROBE_ABLATION_HPP_
#define HPROBE_ABLATION_HPP_

#include <string>
#include <vector>

#include "hprobe/dataset.hpp"
#include "hprobe/loss.hpp"
#include "hprobe/metrics.hpp"
#include "hprobe/probe.hpp"
#include "hprobe/trainer.hpp"

namespace hprobe {

struct AblationRow {
  std::string component;  // focal, span, sparse, kl
  MetricsReport metrics;
  double delta_auc = 0.0;  // ablated - full
  double delta_r_at_fpr = 0.0;
};

struct AblationReport {
  MetricsReport full;
  std::vector<AblationRow> rows;
};

// The four leave-one-out variants of `base`, in table order.
std::vector<std::pair<std::string, LossConfig>> ablation_variants(const LossConfig& base);

// Trains the full loss and each variant from the same initial parameters and
// batch order, scoring on `validation`.
AblationReport run_ablation(const Dataset& train_set, const Dataset& validation, int layer,
                            const ProbeArch& arch, const LossConfig& base,
                            const TrainConfig& train_cfg, std::uint64_t init_seed);

std::string ablation_csv(const AblationReport& report);

}  // namespace hprobe

#endif  // HPROBE_ABLATION_HPP_
