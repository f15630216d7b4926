// Experiment runner for the semi-supervised open-set GAN framework.
//
// Subcommands:
//   run        train/evaluate all trials of a config and write the ledger
//   make-split build a split and write its manifest
//   eval       evaluate a checkpoint against a split manifest
//   emit-grid  render a grid of generator samples to a PPM image
//   emit-map   render a 2D known-score map to a PPM image
//
// Exit codes: 0 success, 1 run failure, 2 usage/config error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "sslosr/sslosr.hpp"

namespace {

std::string dataset_root() {
  const char* env = std::getenv("SSLOSR_DATA_ROOT");
  return env ? env : "";
}

int cmd_run(const std::string& config_path, const std::string& out,
            std::uint64_t seed_override, int trials_override,
            const std::string& scorer) {
  auto cfg = sslosr::load_experiment_config(config_path, dataset_root());
  if (seed_override != 0) cfg.base_seed = seed_override;
  if (trials_override > 0) cfg.trials = trials_override;
  if (!scorer.empty()) cfg.scorer = sslosr::scorer_from_string(scorer);
  auto ledger = sslosr::run_experiment(cfg, out);
  const auto agg = ledger.aggregate();
  std::printf("%s: %zu/%zu trials ok, mean %.2f | %.2f\n", cfg.name.c_str(),
              ledger.n_ok(), ledger.rows.size(), agg.mean_accuracy * 100.0,
              agg.mean_auroc * 100.0);
  return ledger.n_ok() == 0 ? 1 : 0;
}

int cmd_make_split(const std::string& config_path, std::uint64_t seed,
                   const std::string& out) {
  auto cfg = sslosr::load_experiment_config(config_path, dataset_root());
  const std::uint64_t s = seed != 0 ? seed : cfg.base_seed;
  auto split = sslosr::build_split(cfg, s);
  sslosr::write_split_manifest(out, split);
  std::printf("wrote %s (K=%d, lab=%zu, unlab=%zu, test=%zu)\n", out.c_str(),
              split.k(), split.n_lab(), split.n_unlab(), split.n_test());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest,
             const std::string& config_path, const std::string& scorer) {
  auto cfg = sslosr::load_experiment_config(config_path, dataset_root());
  std::ifstream is(manifest);
  if (!is) throw sslosr::io_error("cannot open manifest: " + manifest);
  nlohmann::json mj;
  is >> mj;

  sslosr::TrainState st = sslosr::load_checkpoint(checkpoint);

  // Rebuild the split the manifest describes from the config's datasets.
  std::optional<sslosr::OpenSetSplit> split;
  if (cfg.data_kind == sslosr::ExperimentConfig::DataKind::synth2d) {
    const auto seed = mj.at("seed").get<std::uint64_t>();
    auto [lab_train, novel_train] = sslosr::gen_synth2d(cfg.synth, seed);
    sslosr::Synth2DSpec test_spec = cfg.synth;
    if (cfg.synth_test_samples_per_cluster > 0) {
      test_spec.samples_per_cluster = cfg.synth_test_samples_per_cluster;
    }
    auto [lab_test, novel_test] =
        sslosr::gen_synth2d(test_spec, sslosr::derive_seed(seed, 100));
    split = sslosr::apply_split_manifest(mj, lab_train, &novel_test,
                                         &lab_test);
  } else {
    sslosr::Dataset lab_train =
        sslosr::load_dataset(cfg.path_labelled_train, cfg.file_format);
    std::optional<sslosr::Dataset> lab_test, novel;
    if (!cfg.path_labelled_test.empty()) {
      lab_test = sslosr::load_dataset(cfg.path_labelled_test, cfg.file_format);
    }
    if (!cfg.path_novel.empty()) {
      novel = sslosr::load_dataset(cfg.path_novel, cfg.file_format);
    }
    split = sslosr::apply_split_manifest(mj, lab_train,
                                         novel ? &*novel : nullptr,
                                         lab_test ? &*lab_test : nullptr);
  }

  const auto sk = scorer.empty() ? sslosr::ScorerKind::primary
                                 : sslosr::scorer_from_string(scorer);
  auto report = sslosr::evaluate(st, *split, sk);
  std::printf("%s\n", report.table_row().c_str());
  return 0;
}

int cmd_emit_grid(const std::string& checkpoint, int rows, int cols,
                  std::uint64_t seed, const std::string& out) {
  auto st = sslosr::load_checkpoint(checkpoint);
  sslosr::emit_sample_grid(st, rows, cols, seed, out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_emit_map(const std::string& checkpoint, double x_min, double x_max,
                 double y_min, double y_max, int resolution,
                 const std::string& out, const std::string& scorer) {
  auto st = sslosr::load_checkpoint(checkpoint);
  const auto sk = scorer.empty() ? sslosr::ScorerKind::primary
                                 : sslosr::scorer_from_string(scorer);
  sslosr::emit_score_map(st, x_min, x_max, y_min, y_max, resolution, out, sk);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised open-set GAN experiments"};
  app.require_subcommand(1);

  std::string config, out, scorer, checkpoint, manifest;
  std::uint64_t seed = 0;
  int trials = 0, rows = 8, cols = 8, resolution = 200;
  double x_min = -8, x_max = 8, y_min = -8, y_max = 8;

  auto* run = app.add_subcommand("run", "run all trials of an experiment");
  run->add_option("--config", config, "experiment config (JSON)")->required();
  run->add_option("--out", out, "output directory");
  run->add_option("--seed", seed, "override base seed");
  run->add_option("--trials", trials, "override trial count");
  run->add_option("--scorer", scorer, "novelty scorer: preal|maxsoftmax");

  auto* mk = app.add_subcommand("make-split", "build a split manifest");
  mk->add_option("--config", config, "experiment config (JSON)")->required();
  mk->add_option("--seed", seed, "split seed (default: config base_seed)");
  mk->add_option("--out", out, "manifest output path")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--manifest", manifest, "split manifest")->required();
  ev->add_option("--config", config, "experiment config (JSON)")->required();
  ev->add_option("--scorer", scorer, "novelty scorer: preal|maxsoftmax");

  auto* grid = app.add_subcommand("emit-grid", "render generator samples");
  grid->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  grid->add_option("--rows", rows, "grid rows");
  grid->add_option("--cols", cols, "grid columns");
  grid->add_option("--seed", seed, "noise seed");
  grid->add_option("--out", out, "output PPM path")->required();

  auto* map = app.add_subcommand("emit-map", "render a 2D score map");
  map->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  map->add_option("--x-min", x_min, "region bound");
  map->add_option("--x-max", x_max, "region bound");
  map->add_option("--y-min", y_min, "region bound");
  map->add_option("--y-max", y_max, "region bound");
  map->add_option("--resolution", resolution, "raster resolution");
  map->add_option("--out", out, "output PPM path")->required();
  map->add_option("--scorer", scorer, "novelty scorer: preal|maxsoftmax");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help exits 0; bad usage exits 2
  }

  try {
    if (run->parsed()) return cmd_run(config, out, seed, trials, scorer);
    if (mk->parsed()) return cmd_make_split(config, seed, out);
    if (ev->parsed()) return cmd_eval(checkpoint, manifest, config, scorer);
    if (grid->parsed()) return cmd_emit_grid(checkpoint, rows, cols, seed, out);
    if (map->parsed()) {
      return cmd_emit_map(checkpoint, x_min, x_max, y_min, y_max, resolution,
                          out, scorer);
    }
  } catch (const sslosr::argument_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const sslosr::io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
