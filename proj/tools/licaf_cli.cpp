// Command-line front end: dataset generation, training, retrieval evaluation,
// ablation sweeps, and finite-difference gradient checks.
#include "licaf/licaf.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

void print_progress(long iter, long total, double tri, double ce, double loss, double lr) {
  const long every = std::max(1L, total / 50);
  if (iter % every == 0 || iter == 1 || iter == total)
    std::printf("iter %ld/%ld  l_tri %.4f  l_ce %.4f  total %.4f  lr %.12g\n", iter, total, tri, ce, loss, lr);
}

int cmd_gen_data(const std::string& out, int subjects, int seqs, int t_l, long seed, int hw) {
  licaf::DatasetSpec spec;
  spec.root = out;
  spec.num_subjects = subjects;
  spec.seqs_per_subject = seqs;
  spec.t_l = t_l;
  spec.hw = hw;
  spec.seed = static_cast<uint64_t>(seed);
  auto entries = licaf::write_dataset(spec);
  std::printf("wrote %zu sequences (%d subjects x %d) under %s\n", entries.size(), subjects, seqs, out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, double scale_override) {
  licaf::Config cfg = licaf::Config::from_file(config_path);
  if (scale_override > 0) cfg.set_real("train.scale", scale_override);
  licaf::TrainResult res = licaf::train<float>(cfg, out_dir, print_progress);
  std::printf("done: %ld iterations, final loss %.4f (triplet %.4f, ce %.4f)\n", res.iters, res.final_total,
              res.final_tri, res.final_ce);
  std::printf("checkpoint: %s\nmetrics: %s\n", res.checkpoint.c_str(), res.metrics_csv.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_root, const std::string& manifest) {
  licaf::EvalReport rep = licaf::evaluate_checkpoint<float>(checkpoint, data_root, manifest);
  std::fputs(rep.human_table().c_str(), stdout);
  return 0;
}

int cmd_ablate(const std::string& module, const std::string& config_path, const std::string& out_dir,
               const std::vector<long>& seeds) {
  licaf::Config cfg = licaf::Config::from_file(config_path);
  licaf::AblationTable table;
  if (module == "components") {
    table = licaf::run_components_ablation(cfg, out_dir, seeds);
  } else {
    table = licaf::run_strategy_ablation(cfg, module, out_dir);
  }
  std::fputs(table.human_table().c_str(), stdout);
  return 0;
}

int cmd_gradcheck(const std::string& component, long seed) {
  std::vector<std::string> names =
      component == "all" ? licaf::gradcheck_components() : std::vector<std::string>{component};
  bool all_pass = true;
  for (const auto& name : names) {
    licaf::GradcheckResult res = licaf::run_gradcheck(name, static_cast<uint64_t>(seed));
    std::printf("%-18s %s  max rel err %.3g (tol %.3g, %ld coords, %ld kinked, %d tries)\n",
                res.component.c_str(), res.pass ? "PASS" : "FAIL", res.max_rel_err, res.tolerance,
                res.coords_checked, res.boundary_coords, res.tries);
    all_pass = all_pass && res.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asymmetric LiDAR-camera fusion for gait recognition"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic two-modality gait dataset");
  std::string gen_out;
  int gen_subjects = 8, gen_seqs = 4, gen_tl = 7, gen_hw = 64;
  long gen_seed = 0;
  gen->add_option("--out", gen_out, "Output dataset root")->required();
  gen->add_option("--subjects", gen_subjects, "Number of subjects");
  gen->add_option("--seqs-per-subject", gen_seqs, "Sequences per subject");
  gen->add_option("--tl", gen_tl, "Depth frames per sequence (silhouettes get 3x)");
  gen->add_option("--hw", gen_hw, "Canvas size in pixels (square)");
  gen->add_option("--seed", gen_seed, "Generation seed");

  auto* tr = app.add_subcommand("train", "Train from a config file");
  std::string tr_config, tr_out = "runs/train";
  double tr_scale = -1;
  tr->add_option("--config", tr_config, "Config file")->required();
  tr->add_option("--out", tr_out, "Output directory");
  tr->add_option("--scale", tr_scale, "Override train.scale (shrinks the schedule)");

  auto* ev = app.add_subcommand("eval", "Score gallery/probe retrieval for a checkpoint");
  std::string ev_ckpt, ev_data, ev_manifest;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file (expects a .cfg sibling)")->required();
  ev->add_option("--data", ev_data, "Dataset root")->required();
  ev->add_option("--manifest", ev_manifest, "Manifest override (default <data>/manifest.tsv)");

  auto* ab = app.add_subcommand("ablate", "Run an ablation sweep");
  std::string ab_module, ab_config, ab_out = "runs/ablate";
  std::vector<long> ab_seeds = {0};
  ab->add_option("--module", ab_module, "acca | ictm | components")->required()
      ->check(CLI::IsMember({"acca", "ictm", "components"}));
  ab->add_option("--config", ab_config, "Base config file")->required();
  ab->add_option("--out", ab_out, "Work directory");
  ab->add_option("--seeds", ab_seeds, "Seeds (components rows report the mean)")->delimiter(',');

  auto* gch = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  std::string gc_component = "all";
  long gc_seed = 1;
  gch->add_option("--component", gc_component, "Component name or 'all'");
  gch->add_option("--seed", gc_seed, "Base seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_out, gen_subjects, gen_seqs, gen_tl, gen_seed, gen_hw);
    if (tr->parsed()) return cmd_train(tr_config, tr_out, tr_scale);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_manifest);
    if (ab->parsed()) return cmd_ablate(ab_module, ab_config, ab_out, ab_seeds);
    if (gch->parsed()) return cmd_gradcheck(gc_component, gc_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
