#pragma once

#include "licaf/eval.hpp"
#include "licaf/trainer.hpp"

#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace licaf {

struct AblationRow {
  std::string label;
  double rank1 = 0, rank5 = 0;  // overall, mean over seeds
  std::vector<double> rank1_per_seed;
};

struct AblationTable {
  std::string title;
  std::vector<AblationRow> rows;

  std::string human_table() const {
    std::string out = title + "\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-28s %8s %8s\n", "variant", "rank-1", "rank-5");
    out += buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%-28s %7.1f%% %7.1f%%\n", r.label.c_str(), 100.0 * r.rank1, 100.0 * r.rank5);
      out += buf;
    }
    return out;
  }

  std::string csv() const {
    std::string out = "variant,rank1,rank5,rank1_per_seed\n";
    char buf[256];
    for (const auto& r : rows) {
      std::string per_seed;
      for (double v : r.rank1_per_seed) {
        char tmp[32];
        std::snprintf(tmp, sizeof(tmp), "%.12g", v);
        per_seed += (per_seed.empty() ? "" : ";") + std::string(tmp);
      }
      std::snprintf(buf, sizeof(buf), "%s,%.12g,%.12g,%s\n", r.label.c_str(), r.rank1, r.rank5, per_seed.c_str());
      out += buf;
    }
    return out;
  }
};

namespace detail {

inline EvalReport train_and_eval(const Config& cfg, const std::string& out_dir, const ProgressFn& progress) {
  TrainResult tr = train<float>(cfg, out_dir, progress);
  const std::string root = cfg.require_str("data.root");
  const std::string eval_manifest = cfg.get_str("data.eval_manifest", "");
  return evaluate_checkpoint<float>(tr.checkpoint, root, eval_manifest);
}

}  // namespace detail

/// Trains and scores all five cross-modal strategies for one module ("acca"
/// or "ictm"), holding everything else (including the seed) fixed. Each
/// variant config differs from the base in exactly the <module>.strategy key.
inline AblationTable run_strategy_ablation(const Config& base_cfg, const std::string& module,
                                           const std::string& work_dir, const ProgressFn& progress = nullptr) {
  if (module != "acca" && module != "ictm")
    throw std::invalid_argument("run_strategy_ablation: module must be 'acca' or 'ictm', got '" + module + "'");
  const std::string key = module + ".strategy";
  AblationTable table;
  table.title = "strategy ablation: " + module;
  for (Strategy s : kAllStrategies) {
    Config variant = base_cfg;
    variant.set(key, strategy_key(s));
    auto diff = variant.diff_keys(base_cfg);
    if (!(diff.empty() || (diff.size() == 1 && diff[0] == key)))
      throw std::logic_error("run_strategy_ablation: variant drifted from base beyond " + key);
    EvalReport rep = detail::train_and_eval(variant, work_dir + "/" + module + "_" + strategy_key(s), progress);
    AblationRow row;
    row.label = strategy_label(s);
    row.rank1 = rep.overall.rank1();
    row.rank5 = rep.overall.rank5();
    row.rank1_per_seed = {row.rank1};
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// Component stack: pooled streams only, then +ICTM, then +ICTM+ACCA.
/// Each row is trained once per seed; reported numbers are seed means.
inline AblationTable run_components_ablation(const Config& base_cfg, const std::string& work_dir,
                                             const std::vector<long>& seeds = {0},
                                             const ProgressFn& progress = nullptr) {
  if (seeds.empty()) throw std::invalid_argument("run_components_ablation: need at least one seed");
  struct Variant {
    const char* label;
    const char* acca;
    const char* ictm;
  };
  const Variant variants[] = {
      {"baseline", "false", "false"},
      {"+ICTM", "false", "true"},
      {"+ICTM+ACCA", "true", "true"},
  };
  AblationTable table;
  table.title = "components ablation";
  int vi = 0;
  for (const auto& v : variants) {
    AblationRow row;
    row.label = v.label;
    double sum1 = 0, sum5 = 0;
    for (long seed : seeds) {
      Config variant = base_cfg;
      variant.set("acca.enabled", v.acca);
      variant.set("ictm.enabled", v.ictm);
      variant.set_int("train.seed", seed);
      EvalReport rep = detail::train_and_eval(
          variant, work_dir + "/comp" + std::to_string(vi) + "_seed" + std::to_string(seed), progress);
      row.rank1_per_seed.push_back(rep.overall.rank1());
      sum1 += rep.overall.rank1();
      sum5 += rep.overall.rank5();
    }
    row.rank1 = sum1 / static_cast<double>(seeds.size());
    row.rank5 = sum5 / static_cast<double>(seeds.size());
    table.rows.push_back(std::move(row));
    ++vi;
  }
  return table;
}

}  // namespace licaf
