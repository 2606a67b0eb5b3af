#pragma once

#include "licaf/config.hpp"
#include "licaf/datagen.hpp"
#include "licaf/network.hpp"
#include "licaf/optim.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace licaf {

// Reference schedule; train.scale multiplies every milestone and the total.
inline constexpr long kBaseIters = 40000;
inline constexpr long kBaseMilestone1 = 20000;
inline constexpr long kBaseMilestone2 = 30000;

struct TrainResult {
  std::string checkpoint;   // final weights
  std::string config_path;  // resolved config written next to the checkpoint
  std::string metrics_csv;
  long iters = 0;
  long num_classes = 0;
  double final_tri = 0, final_ce = 0, final_total = 0;
};

using ProgressFn = std::function<void(long iter, long total, double l_tri, double l_ce, double l_total, double lr)>;

namespace detail {

/// Distinct subject ids in ascending order; positions are the class indices.
inline std::vector<int> label_universe(const std::vector<ManifestEntry>& manifest) {
  std::map<int, bool> seen;
  for (const auto& e : manifest) seen[e.subject_id] = true;
  std::vector<int> ids;
  ids.reserve(seen.size());
  for (const auto& [id, _] : seen) ids.push_back(id);
  return ids;
}

inline std::string format_csv_row(long iter, double tri, double ce, double total, double lr) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%ld,%.12g,%.12g,%.12g,%.12g", iter, tri, ce, total, lr);
  return buf;
}

}  // namespace detail

/// Runs the full loop described by `cfg`, writing metrics.csv, milestone
/// checkpoints, and ckpt_final.lcaf (+ resolved .cfg sibling) under out_dir.
/// Iterations are 1-based; the CSV has one row per iteration.
template <class S = float>
TrainResult train(const Config& cfg, const std::string& out_dir, const ProgressFn& progress = nullptr) {
  const std::string root = cfg.require_str("data.root");
  const std::string manifest_path = cfg.get_str("data.manifest", root + "/manifest.tsv");
  auto manifest = read_manifest(manifest_path);
  if (manifest.empty()) throw std::runtime_error("train: empty manifest " + manifest_path);
  const std::vector<int> universe = detail::label_universe(manifest);
  std::map<int, int> label_of;
  for (size_t i = 0; i < universe.size(); ++i) label_of[universe[i]] = static_cast<int>(i);

  const double scale = cfg.get_real("train.scale", 0.01);
  if (scale <= 0) throw std::invalid_argument("train.scale must be positive");
  const long total_iters = std::max(1L, static_cast<long>(std::llround(kBaseIters * scale)));
  std::vector<long> milestones;
  for (long base : {kBaseMilestone1, kBaseMilestone2}) {
    const long m = static_cast<long>(std::llround(base * scale));
    if (m >= 1 && m <= total_iters) milestones.push_back(m);
  }

  Config resolved = cfg;
  resolved.set_int("model.num_classes", static_cast<long>(universe.size()));
  NetConfig nc = NetConfig::from(resolved);
  // Write back everything the run actually used so the checkpoint sibling
  // reconstructs the exact architecture.
  resolved.set_int("model.width", nc.width);
  resolved.set_int("model.embed", nc.embed);
  resolved.set_int("model.input_hw", nc.input_hw);
  {
    std::string bins;
    for (long b : nc.hpp_bins) bins += (bins.empty() ? "" : ",") + std::to_string(b);
    resolved.set("model.hpp_bins", bins);
  }
  resolved.set("acca.enabled", nc.acca_enabled ? "true" : "false");
  resolved.set("acca.strategy", strategy_key(nc.acca_strategy));
  resolved.set("ictm.enabled", nc.ictm_enabled ? "true" : "false");
  resolved.set_int("ictm.layers", nc.ictm_layers);
  resolved.set_int("ictm.heads", nc.heads);
  resolved.set("ictm.strategy", strategy_key(nc.ictm_strategy));
  resolved.set("ictm.q_is_target", nc.q_is_target ? "true" : "false");
  resolved.set_real("loss.margin", nc.margin);
  resolved.set_real("loss.tri_weight", nc.tri_weight);
  resolved.set_real("loss.ce_weight", nc.ce_weight);
  resolved.set_real("train.scale", scale);

  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("train.seed", 0));
  const long p = cfg.get_int("train.p", 8);
  const long k = cfg.get_int("train.k", 8);
  const long t_l = cfg.get_int("train.t_l", 7);
  const double base_lr = cfg.get_real("train.lr", 0.1);
  const double momentum = cfg.get_real("train.momentum", 0.9);
  const double weight_decay = cfg.get_real("train.weight_decay", 5e-4);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("train: cannot create " + out_dir + ": " + ec.message());

  LicafNet<S> net(nc);
  net.init(seed);
  Sgd<S> opt(net.params(), base_lr, momentum, weight_decay, milestones);
  Rng sampler(seed, 2);

  TrainResult res;
  res.iters = total_iters;
  res.num_classes = static_cast<long>(universe.size());
  res.metrics_csv = out_dir + "/metrics.csv";
  std::ofstream csv(res.metrics_csv);
  if (!csv) throw std::runtime_error("train: cannot write " + res.metrics_csv);
  csv << "iter,l_tri,l_ce,total,lr\n";

  for (long iter = 1; iter <= total_iters; ++iter) {
    ModalBatch<S> batch = sample_batch<S>(root, manifest, p, k, t_l, sampler);
    std::vector<int> labels;
    labels.reserve(batch.labels.size());
    for (int sid : batch.labels) labels.push_back(label_of.at(sid));
    net.zero_grads();
    Tensor<S> emb = net.forward(batch.silhouettes, batch.depths, true);
    LossParts<S> parts = net.loss(emb, labels);
    if (!std::isfinite(static_cast<double>(parts.total)))
      throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(iter));
    net.backward();
    opt.step(iter);
    const double lr_now = opt.lr(iter);
    csv << detail::format_csv_row(iter, parts.tri, parts.ce, parts.total, lr_now) << "\n";
    if (progress) progress(iter, total_iters, parts.tri, parts.ce, parts.total, lr_now);
    for (long m : milestones)
      if (iter == m) net.save(out_dir + "/ckpt_iter" + std::to_string(m) + ".lcaf");
    res.final_tri = parts.tri;
    res.final_ce = parts.ce;
    res.final_total = parts.total;
  }
  csv.close();

  res.checkpoint = out_dir + "/ckpt_final.lcaf";
  res.config_path = res.checkpoint + ".cfg";
  net.save(res.checkpoint);
  resolved.save(res.config_path);
  return res;
}

}  // namespace licaf
