#include "hprobe/ablation.hpp"

#include <sstream>

namespace hprobe {

std::vector<std::pair<std::string, LossConfig>> ablation_variants(const LossConfig& base) {
  std::vector<std::pair<std::string, LossConfig>> out;
  LossConfig c = base;
  c.use_focal = false;
  out.emplace_back("focal", c);
  c = base;
  c.lambda_span = 0.0;
  out.emplace_back("span", c);
  c = base;
  c.lambda_sparse = 0.0;
  out.emplace_back("sparse", c);
  c = base;
  c.lambda_kl = 0.0;
  out.emplace_back("kl", c);
  return out;
}

AblationReport run_ablation(const Dataset& train_set, const Dataset& validation, int layer,
                            const ProbeArch& arch, const LossConfig& base,
                            const TrainConfig& train_cfg, std::uint64_t init_seed) {
  validate_loss_config(base);
  const ProbeParams init = init_probe(arch, init_seed);
  auto fit = [&](const LossConfig& loss) {
    const TrainResult r = train(init, train_set, &validation, layer, loss, train_cfg);
    return evaluate(r.params, validation, layer, base, train_cfg.fpr_target,
                    train_cfg.threshold)
        .metrics;
  };
  AblationReport report;
  report.full = fit(base);
  for (const auto& [name, loss] : ablation_variants(base)) {
    AblationRow row;
    row.component = name;
    row.metrics = fit(loss);
    row.delta_auc = row.metrics.auc - report.full.auc;
    row.delta_r_at_fpr = row.metrics.r_at_fpr - report.full.r_at_fpr;
    report.rows.push_back(row);
  }
  return report;
}

std::string ablation_csv(const AblationReport& report) {
  std::ostringstream s;
  s.precision(10);
  s << "removed,auc,r_at_fpr,delta_auc,delta_r_at_fpr\n";
  s << "none," << report.full.auc << ',' << report.full.r_at_fpr << ",0,0\n";
  for (const auto& r : report.rows) {
    s << r.component << ',' << r.metrics.auc << ',' << r.metrics.r_at_fpr << ','
      << r.delta_auc << ',' << r.delta_r_at_fpr << '\n';
  }
  return s.str();
}

}  // namespace hprobe
