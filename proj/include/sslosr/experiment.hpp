#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sslosr/dataset.hpp"
#include "sslosr/eval.hpp"
#include "sslosr/image.hpp"
#include "sslosr/split.hpp"
#include "sslosr/synth2d.hpp"
#include "sslosr/train.hpp"

namespace sslosr {

namespace detail {

// Unknown config keys are hard errors: silent hyperparameter typos are
// worse than a strict schema.
inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) {
    throw argument_error("config: " + where + " must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw argument_error("config: unknown key \"" + key + "\" in " + where);
    }
  }
}

}  // namespace detail

// One reproducible experiment: dataset or synthetic spec, split parameters,
// training configuration and trial count.
struct ExperimentConfig {
  std::string name = "experiment";

  enum class DataKind { synth2d, files } data_kind = DataKind::synth2d;
  // synth2d
  Synth2DSpec synth;
  std::size_t synth_test_samples_per_cluster = 0;  // 0: same as train draw
  // files
  DataFormat file_format = DataFormat::raw_tensor;
  std::string path_labelled_train, path_labelled_test, path_novel;

  int labels_per_category = 10;
  std::optional<std::vector<int>> holdout_categories;

  // Training template; the architecture is resolved per trial when
  // arch_is_default (from the split's K and sample shape).
  TrainConfig train_base;
  bool arch_is_default = true;
  int default_hidden = 64;

  int trials = 1;
  std::uint64_t base_seed = 1;
  ScorerKind scorer = ScorerKind::primary;
  bool emit_sample_grid = false;
  bool emit_score_map = false;
  std::string out_dir;
};

inline ExperimentConfig parse_experiment_config(
    const nlohmann::json& j, const std::string& dataset_root = "") {
  detail::check_keys(j,
                     {"schema_version", "name", "dataset", "split", "train",
                      "trials", "base_seed", "scorer", "emit", "out_dir"},
                     "top level");
  if (!j.contains("schema_version") || j.at("schema_version") != 1) {
    throw argument_error("config: schema_version must be 1");
  }
  ExperimentConfig cfg;
  cfg.name = j.value("name", "experiment");
  cfg.trials = j.value("trials", 1);
  cfg.base_seed = j.value("base_seed", 1ULL);
  if (cfg.trials < 1) throw argument_error("config: trials must be >= 1");
  cfg.scorer = scorer_from_string(j.value("scorer", "preal"));
  cfg.out_dir = j.value("out_dir", "");

  auto resolve = [&](const std::string& p) {
    if (p.empty() || dataset_root.empty() ||
        std::filesystem::path(p).is_absolute()) {
      return p;
    }
    return (std::filesystem::path(dataset_root) / p).string();
  };

  const auto& ds = j.at("dataset");
  const std::string kind = ds.at("kind");
  if (kind == "synth2d") {
    detail::check_keys(ds,
                       {"kind", "centers", "stddev", "stddevs",
                        "samples_per_cluster", "novel_clusters",
                        "test_samples_per_cluster"},
                       "dataset");
    cfg.data_kind = ExperimentConfig::DataKind::synth2d;
    for (const auto& c : ds.at("centers")) {
      cfg.synth.cluster_centers.push_back(
          {c.at(0).get<double>(), c.at(1).get<double>()});
    }
    if (ds.contains("stddevs")) {
      cfg.synth.cluster_stddevs = ds.at("stddevs").get<std::vector<double>>();
    } else {
      cfg.synth.cluster_stddevs.assign(cfg.synth.cluster_centers.size(),
                                       ds.value("stddev", 1.0));
    }
    cfg.synth.samples_per_cluster = ds.at("samples_per_cluster");
    if (ds.contains("novel_clusters")) {
      cfg.synth.novel_cluster_indices =
          ds.at("novel_clusters").get<std::vector<std::size_t>>();
    }
    cfg.synth_test_samples_per_cluster =
        ds.value("test_samples_per_cluster", 0ULL);
    cfg.synth.validate();
  } else if (kind == "files") {
    detail::check_keys(
        ds, {"kind", "format", "labelled_train", "labelled_test", "novel"},
        "dataset");
    cfg.data_kind = ExperimentConfig::DataKind::files;
    cfg.file_format = parse_data_format(ds.at("format"));
    cfg.path_labelled_train = resolve(ds.at("labelled_train"));
    cfg.path_labelled_test = resolve(ds.value("labelled_test", ""));
    cfg.path_novel = resolve(ds.value("novel", ""));
  } else {
    throw argument_error("config: dataset.kind must be synth2d or files");
  }

  const auto& sp = j.at("split");
  detail::check_keys(sp, {"labels_per_category", "holdout_categories"},
                     "split");
  cfg.labels_per_category = sp.at("labels_per_category");
  if (sp.contains("holdout_categories")) {
    cfg.holdout_categories = sp.at("holdout_categories").get<std::vector<int>>();
  }

  const auto& tr = j.at("train");
  detail::check_keys(
      tr, {"model_kind", "epochs", "batch_size", "lr", "lr_classifier",
           "lr_generator", "lr_discriminator", "beta1", "beta2", "gamma",
           "eval_every", "entropy_weight", "fold_labelled_into_real",
           "fm_per_pair", "fresh_noise_for_classifier",
           "divergence_threshold", "arch", "hidden"},
      "train");
  TrainConfig& t = cfg.train_base;
  t.kind = model_kind_from_string(tr.at("model_kind"));
  t.epochs = tr.value("epochs", 50);
  t.batch_size = tr.value("batch_size", 64);
  t.lr = tr.value("lr", 2e-4);
  t.lr_classifier = tr.value("lr_classifier", -1.0);
  t.lr_generator = tr.value("lr_generator", -1.0);
  t.lr_discriminator = tr.value("lr_discriminator", -1.0);
  t.beta1 = tr.value("beta1", 0.5);
  t.beta2 = tr.value("beta2", 0.999);
  t.gamma = tr.value("gamma", 0.1);
  t.eval_every = tr.value("eval_every", 0);
  t.entropy_weight = tr.value("entropy_weight", 1.0);
  t.fold_labelled_into_real = tr.value("fold_labelled_into_real", false);
  t.fm_per_pair = tr.value("fm_per_pair", false);
  t.fresh_noise_for_classifier = tr.value("fresh_noise_for_classifier", true);
  t.divergence_threshold = tr.value("divergence_threshold", 1e4);
  cfg.default_hidden = tr.value("hidden", 64);
  if (tr.contains("arch")) {
    t.arch = arch_from_json(tr.at("arch"));
    cfg.arch_is_default = false;
  }

  if (j.contains("emit")) {
    detail::check_keys(j.at("emit"), {"sample_grid", "score_map"}, "emit");
    cfg.emit_sample_grid = j.at("emit").value("sample_grid", false);
    cfg.emit_score_map = j.at("emit").value("score_map", false);
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(
    const std::string& path, const std::string& dataset_root = "") {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open config: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path + ": " + e.what());
  }
  return parse_experiment_config(j, dataset_root);
}

// Builds one trial's split. Synthetic datasets draw fresh train and test
// data per trial; file datasets re-split under the trial seed.
inline OpenSetSplit build_split(const ExperimentConfig& cfg,
                                std::uint64_t seed) {
  if (cfg.data_kind == ExperimentConfig::DataKind::synth2d) {
    auto [lab_train, novel_train] = gen_synth2d(cfg.synth, seed);
    Synth2DSpec test_spec = cfg.synth;
    if (cfg.synth_test_samples_per_cluster > 0) {
      test_spec.samples_per_cluster = cfg.synth_test_samples_per_cluster;
    }
    auto [lab_test, novel_test] = gen_synth2d(test_spec, derive_seed(seed, 100));
    if (novel_test.n() == 0) {
      throw argument_error(
          "synth2d experiment needs at least one novel cluster");
    }
    return make_ssl_split(lab_train, &novel_test, cfg.labels_per_category,
                          std::nullopt, seed, &lab_test);
  }

  Dataset lab_train = load_dataset(cfg.path_labelled_train, cfg.file_format);
  std::optional<Dataset> lab_test;
  if (!cfg.path_labelled_test.empty()) {
    lab_test = load_dataset(cfg.path_labelled_test, cfg.file_format);
  }
  std::optional<Dataset> novel;
  if (!cfg.path_novel.empty()) {
    novel = load_dataset(cfg.path_novel, cfg.file_format);
  }
  return make_ssl_split(lab_train, novel ? &*novel : nullptr,
                        cfg.labels_per_category, cfg.holdout_categories, seed,
                        lab_test ? &*lab_test : nullptr);
}

// Resolves the per-trial training configuration against a built split.
inline TrainConfig resolve_train_config(const ExperimentConfig& cfg,
                                        const OpenSetSplit& split,
                                        std::uint64_t seed) {
  TrainConfig t = cfg.train_base;
  t.seed = seed;
  if (cfg.arch_is_default) {
    const auto mode = uses_reciprocal_points(t.kind) ? ClassifierMode::arp
                                                     : ClassifierMode::fm;
    t.arch = make_default_arch(split.sample_shape(), split.k(), mode,
                               cfg.default_hidden);
  }
  t.validate();
  return t;
}

struct TrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  EvalReport report;
};

struct RunLedger {
  std::string name;
  std::uint64_t base_seed = 0;
  std::vector<TrialResult> rows;

  std::size_t n_ok() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.failed ? 0 : 1;
    return n;
  }

  // Population mean/stddev over the successful trials.
  struct Aggregate {
    double mean_accuracy = 0, std_accuracy = 0;
    double mean_auroc = 0, std_auroc = 0;
  };

  Aggregate aggregate() const {
    Aggregate a;
    std::vector<double> accs, aucs;
    for (const auto& r : rows) {
      if (r.failed) continue;
      accs.push_back(r.report.closed_accuracy);
      if (r.report.auroc) aucs.push_back(*r.report.auroc);
    }
    auto mean_std = [](const std::vector<double>& v, double& mean,
                       double& sd) {
      if (v.empty()) return;
      mean = 0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0;
      for (double x : v) var += (x - mean) * (x - mean);
      sd = std::sqrt(var / static_cast<double>(v.size()));
    };
    mean_std(accs, a.mean_accuracy, a.std_accuracy);
    mean_std(aucs, a.mean_auroc, a.std_auroc);
    return a;
  }

  std::string csv() const {
    std::string out = metrics_csv_header() + "\n";
    for (const auto& r : rows) {
      const std::string run_id = name + "-t" + std::to_string(r.trial);
      if (r.failed) {
        out += run_id + ",FAILED,,,,,\n";
      } else {
        out += metrics_csv_row(r.report, run_id) + "\n";
      }
    }
    const auto agg = aggregate();
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%s-mean,,,,,%.17g,%.17g\n%s-std,,,,,%.17g,%.17g\n",
                  name.c_str(), agg.mean_accuracy, agg.mean_auroc,
                  name.c_str(), agg.std_accuracy, agg.std_auroc);
    return out + buf;
  }

  nlohmann::json to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json e = {{"trial", r.trial}, {"seed", r.seed},
                          {"failed", r.failed}};
      if (r.failed) {
        e["error"] = r.error;
      } else {
        e["report"] = sslosr::to_json(r.report);
      }
      rows_j.push_back(e);
    }
    const auto agg = aggregate();
    return {{"kind", "run-ledger"},
            {"name", name},
            {"base_seed", base_seed},
            {"rows", rows_j},
            {"aggregate",
             {{"mean_accuracy", agg.mean_accuracy},
              {"std_accuracy", agg.std_accuracy},
              {"mean_auroc", agg.mean_auroc},
              {"std_auroc", agg.std_auroc},
              {"trials_ok", n_ok()}}}};
  }
};

// Runs every trial: build split, train, evaluate, persist artifacts.
// Trial seeds are base_seed + trial_index. A failed trial is recorded and
// the remaining trials proceed.
inline RunLedger run_experiment(const ExperimentConfig& cfg,
                                const std::string& out_dir_override = "",
                                bool quiet = false) {
  RunLedger ledger;
  ledger.name = cfg.name;
  ledger.base_seed = cfg.base_seed;

  std::string out_dir =
      out_dir_override.empty() ? cfg.out_dir : out_dir_override;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
  }
  auto out_path = [&](const std::string& f) {
    return (std::filesystem::path(out_dir) / f).string();
  };

  for (int trial = 0; trial < cfg.trials; ++trial) {
    TrialResult result;
    result.trial = trial;
    result.seed = cfg.base_seed + static_cast<std::uint64_t>(trial);
    try {
      OpenSetSplit split = build_split(cfg, result.seed);
      TrainConfig tcfg = resolve_train_config(cfg, split, result.seed);
      TrainState st = train(split, tcfg);
      if (st.diverged) {
        throw numeric_error("training diverged at step " +
                            std::to_string(st.step));
      }
      result.report = evaluate(st, split, cfg.scorer);
      if (!out_dir.empty()) {
        const std::string tag = "trial_" + std::to_string(trial);
        write_split_manifest(out_path(tag + "_split.json"), split);
        save_checkpoint(st, out_path(tag + ".ckpt"));
        write_eval_report(out_path(tag + "_report.json"), result.report);
        if (cfg.emit_sample_grid && uses_generator(tcfg.kind)) {
          emit_sample_grid(st, 8, 8, derive_seed(result.seed, 7),
                           out_path(tag + "_samples.ppm"));
        }
        if (cfg.emit_score_map && tcfg.arch.input_dim() == 2) {
          emit_score_map(st, -8, 8, -8, 8, 200,
                         out_path(tag + "_score_map.ppm"), cfg.scorer);
        }
      }
      if (!quiet) {
        std::printf("[%s trial %d seed %llu] %s  %s\n", cfg.name.c_str(),
                    trial, static_cast<unsigned long long>(result.seed),
                    result.report.model_kind.c_str(),
                    result.report.table_row().c_str());
      }
    } catch (const std::exception& e) {
      result.failed = true;
      result.error = e.what();
      if (!quiet) {
        std::printf("[%s trial %d] FAILED: %s\n", cfg.name.c_str(), trial,
                    e.what());
      }
    }
    ledger.rows.push_back(std::move(result));
  }

  if (!out_dir.empty()) {
    std::ofstream csv(out_path("ledger.csv"));
    csv << ledger.csv();
    std::ofstream js(out_path("ledger.json"));
    js << ledger.to_json().dump(2) << "\n";
  }
  return ledger;
}

}  // namespace sslosr
