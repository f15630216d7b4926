#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sslosr/dataset.hpp"
#include "sslosr/rng.hpp"

namespace sslosr {

// Access counters let tests assert the training contracts: supervised
// baselines never touch the unlabelled pool, and no trainer ever reads the
// test set's anticipated labels.
struct PoolAccessCounts {
  std::uint64_t lab_train = 0;
  std::uint64_t unlab_train = 0;
  std::uint64_t unlab_anticipated = 0;
  std::uint64_t test_samples = 0;
  std::uint64_t test_anticipated = 0;
};

// The three sample pools of one open-set SSL experiment. Immutable after
// construction; anticipated labels of test samples lie in 1..K for knowns
// and K+1 for novels.
class OpenSetSplit {
 public:
  struct Pools {
    Eigen::MatrixXd lab_samples;
    std::vector<int> lab_labels;                 // 1..K
    Eigen::MatrixXd unlab_samples;
    std::vector<int> unlab_anticipated;          // hidden, 1..K
    Eigen::MatrixXd test_samples;
    std::vector<int> test_anticipated;           // 1..K+1
  };

  struct Provenance {
    std::string mode;  // "cross-dataset" | "holdout"
    std::string labelled_source, novel_source, labelled_test;
    std::string test_novel_from;  // which source the novel indices refer to
    std::vector<int> holdout_categories;         // original labels
    std::vector<std::pair<int, int>> label_map;  // original -> split label
    std::vector<std::size_t> lab_indices, unlab_indices;
    std::vector<std::size_t> test_known_indices, test_novel_indices;
  };

  OpenSetSplit(Pools pools, int k, int labels_per_category, std::uint64_t seed,
               std::vector<std::size_t> shape, Provenance prov)
      : pools_(std::move(pools)),
        k_(k),
        labels_per_category_(labels_per_category),
        seed_(seed),
        shape_(std::move(shape)),
        prov_(std::move(prov)),
        counts_(std::make_shared<Counters>()) {
    validate();
  }

  int k() const { return k_; }
  int labels_per_category() const { return labels_per_category_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::size_t>& sample_shape() const { return shape_; }
  const Provenance& provenance() const { return prov_; }

  const Eigen::MatrixXd& lab_samples() const {
    counts_->lab_train.fetch_add(1, std::memory_order_relaxed);
    return pools_.lab_samples;
  }
  const std::vector<int>& lab_labels() const {
    counts_->lab_train.fetch_add(1, std::memory_order_relaxed);
    return pools_.lab_labels;
  }
  const Eigen::MatrixXd& unlab_samples() const {
    counts_->unlab_train.fetch_add(1, std::memory_order_relaxed);
    return pools_.unlab_samples;
  }
  // Hidden ground truth for the unlabelled pool; diagnostics only.
  const std::vector<int>& unlab_anticipated() const {
    counts_->unlab_anticipated.fetch_add(1, std::memory_order_relaxed);
    return pools_.unlab_anticipated;
  }
  const Eigen::MatrixXd& test_samples() const {
    counts_->test_samples.fetch_add(1, std::memory_order_relaxed);
    return pools_.test_samples;
  }
  const std::vector<int>& test_anticipated() const {
    counts_->test_anticipated.fetch_add(1, std::memory_order_relaxed);
    return pools_.test_anticipated;
  }

  std::size_t n_lab() const {
    return static_cast<std::size_t>(pools_.lab_samples.rows());
  }
  std::size_t n_unlab() const {
    return static_cast<std::size_t>(pools_.unlab_samples.rows());
  }
  std::size_t n_test() const {
    return static_cast<std::size_t>(pools_.test_samples.rows());
  }

  PoolAccessCounts access_counts() const {
    PoolAccessCounts c;
    c.lab_train = counts_->lab_train.load();
    c.unlab_train = counts_->unlab_train.load();
    c.unlab_anticipated = counts_->unlab_anticipated.load();
    c.test_samples = counts_->test_samples.load();
    c.test_anticipated = counts_->test_anticipated.load();
    return c;
  }

 private:
  struct Counters {
    std::atomic<std::uint64_t> lab_train{0};
    std::atomic<std::uint64_t> unlab_train{0};
    std::atomic<std::uint64_t> unlab_anticipated{0};
    std::atomic<std::uint64_t> test_samples{0};
    std::atomic<std::uint64_t> test_anticipated{0};
  };

  void validate() const {
    if (k_ < 2) throw argument_error("OpenSetSplit: K must be >= 2");
    for (int l : pools_.lab_labels) {
      if (l < 1 || l > k_) {
        throw argument_error("OpenSetSplit: labelled-pool label outside C_K");
      }
    }
    for (int l : pools_.unlab_anticipated) {
      if (l < 1 || l > k_) {
        throw argument_error(
            "OpenSetSplit: unlabelled anticipated label outside C_K "
            "(observed novels are not supported)");
      }
    }
    bool has_novel = false;
    for (int l : pools_.test_anticipated) {
      if (l < 1 || l > k_ + 1) {
        throw argument_error("OpenSetSplit: test anticipated label outside "
                             "C_K u {K+1}");
      }
      has_novel |= (l == k_ + 1);
    }
    if (!has_novel) {
      throw argument_error(
          "OpenSetSplit: test set must contain at least one novel sample");
    }
    if (static_cast<std::size_t>(pools_.lab_samples.rows()) !=
        pools_.lab_labels.size()) {
      throw argument_error("OpenSetSplit: labelled pool size mismatch");
    }
  }

  Pools pools_;
  int k_;
  int labels_per_category_;
  std::uint64_t seed_;
  std::vector<std::size_t> shape_;
  Provenance prov_;
  std::shared_ptr<Counters> counts_;
};

// ---------------------------------------------------------------------------
// Split construction
// ---------------------------------------------------------------------------

// Builds an open-set SSL split from a labelled source.
//
// Exactly one novelty mode must be given:
//  * cross-dataset: `novel_source` supplies the novel test portion (its
//    samples are adapted to the labelled shape and anticipated K+1);
//  * holdout: `holdout_categories` (original labels) are removed from both
//    training pools entirely; their samples in `labelled_test` become the
//    novel portion. Without a `labelled_test`, the removed training samples
//    are used as the novel test pool instead of being discarded.
//
// `labelled_test`, when given, supplies the known-category test portion.
// Per category, exactly labels_per_category samples are drawn into the
// labelled pool; the rest of the training samples form the unlabelled pool
// with their labels hidden. Deterministic under seed.
inline OpenSetSplit make_ssl_split(
    const Dataset& labelled_source, const Dataset* novel_source,
    int labels_per_category,
    const std::optional<std::vector<int>>& holdout_categories,
    std::uint64_t seed, const Dataset* labelled_test = nullptr) {
  labelled_source.validate();
  const bool holdout_mode = holdout_categories.has_value();
  if (holdout_mode == (novel_source != nullptr)) {
    throw argument_error(
        "make_ssl_split: exactly one of novel_source / holdout_categories");
  }
  if (labels_per_category < 1) {
    throw argument_error("make_ssl_split: labels_per_category must be >= 1");
  }

  const int k_total = labelled_source.k_total();
  std::vector<bool> held(static_cast<std::size_t>(k_total) + 1, false);
  if (holdout_mode) {
    for (int c : *holdout_categories) {
      if (c < 1 || c > k_total) {
        throw argument_error("make_ssl_split: holdout category " +
                             std::to_string(c) + " outside 1.." +
                             std::to_string(k_total));
      }
      held[static_cast<std::size_t>(c)] = true;
    }
  }

  // Original label -> split label for the kept categories, ascending.
  std::vector<int> label_map(static_cast<std::size_t>(k_total) + 1, 0);
  int k = 0;
  for (int c = 1; c <= k_total; ++c) {
    if (!held[static_cast<std::size_t>(c)]) {
      label_map[static_cast<std::size_t>(c)] = ++k;
    }
  }
  if (k < 2) {
    throw argument_error("make_ssl_split: holdout leaves K < 2 categories");
  }

  // Per-category index lists over the training source.
  std::vector<std::vector<std::size_t>> by_cat(
      static_cast<std::size_t>(k_total) + 1);
  for (std::size_t i = 0; i < labelled_source.n(); ++i) {
    by_cat[static_cast<std::size_t>(labelled_source.labels[i])].push_back(i);
  }
  for (int c = 1; c <= k_total; ++c) {
    if (held[static_cast<std::size_t>(c)]) continue;
    if (by_cat[static_cast<std::size_t>(c)].size() <
        static_cast<std::size_t>(labels_per_category)) {
      throw argument_error(
          "make_ssl_split: labels_per_category " +
          std::to_string(labels_per_category) + " exceeds size of category " +
          std::to_string(c) + " (" +
          std::to_string(by_cat[static_cast<std::size_t>(c)].size()) + ")");
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> lab_idx, unlab_idx;
  for (int c = 1; c <= k_total; ++c) {
    const auto& pool = by_cat[static_cast<std::size_t>(c)];
    if (held[static_cast<std::size_t>(c)] || pool.empty()) continue;
    auto picks = rng.sample_without_replacement(
        pool.size(), static_cast<std::size_t>(labels_per_category));
    std::vector<bool> picked(pool.size(), false);
    for (auto p : picks) picked[p] = true;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      (picked[j] ? lab_idx : unlab_idx).push_back(pool[j]);
    }
  }
  std::sort(lab_idx.begin(), lab_idx.end());
  std::sort(unlab_idx.begin(), unlab_idx.end());

  OpenSetSplit::Pools pools;
  const auto dim = static_cast<Eigen::Index>(labelled_source.sample_dim());
  auto fill = [&](const std::vector<std::size_t>& idx, const Dataset& src,
                  Eigen::MatrixXd& out) {
    out.resize(static_cast<Eigen::Index>(idx.size()), dim);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) =
          src.samples.row(static_cast<Eigen::Index>(idx[i]));
    }
  };
  fill(lab_idx, labelled_source, pools.lab_samples);
  fill(unlab_idx, labelled_source, pools.unlab_samples);
  for (auto i : lab_idx) {
    pools.lab_labels.push_back(label_map[static_cast<std::size_t>(
        labelled_source.labels[i])]);
  }
  for (auto i : unlab_idx) {
    pools.unlab_anticipated.push_back(label_map[static_cast<std::size_t>(
        labelled_source.labels[i])]);
  }

  // Test assembly.
  OpenSetSplit::Provenance prov;
  prov.mode = holdout_mode ? "holdout" : "cross-dataset";
  prov.labelled_source = labelled_source.name;
  if (novel_source) prov.novel_source = novel_source->name;
  if (labelled_test) prov.labelled_test = labelled_test->name;
  if (holdout_mode) prov.holdout_categories = *holdout_categories;
  for (int c = 1; c <= k_total; ++c) {
    if (label_map[static_cast<std::size_t>(c)] != 0) {
      prov.label_map.emplace_back(c, label_map[static_cast<std::size_t>(c)]);
    }
  }
  prov.lab_indices = lab_idx;
  prov.unlab_indices = unlab_idx;

  std::vector<std::size_t> test_known_idx, test_novel_idx;
  const Dataset* novel_pool = nullptr;  // where test_novel_idx points
  if (labelled_test) {
    labelled_test->validate();
    if (labelled_test->sample_dim() != labelled_source.sample_dim()) {
      throw argument_error(
          "make_ssl_split: labelled_test sample shape differs from source");
    }
    for (std::size_t i = 0; i < labelled_test->n(); ++i) {
      const int c = labelled_test->labels[i];
      if (c <= k_total && held[static_cast<std::size_t>(c)]) {
        test_novel_idx.push_back(i);  // holdout novels from the test portion
      } else if (c <= k_total && label_map[static_cast<std::size_t>(c)] != 0) {
        test_known_idx.push_back(i);
      }
    }
    if (holdout_mode) {
      novel_pool = labelled_test;
      prov.test_novel_from = "labelled_test";
    }
  } else if (holdout_mode) {
    // No test portion: the removed held-out training samples become novels.
    for (int c = 1; c <= k_total; ++c) {
      if (!held[static_cast<std::size_t>(c)]) continue;
      for (auto i : by_cat[static_cast<std::size_t>(c)]) {
        test_novel_idx.push_back(i);
      }
    }
    std::sort(test_novel_idx.begin(), test_novel_idx.end());
    novel_pool = &labelled_source;
    prov.test_novel_from = "labelled_source";
  }

  Dataset novel_adapted;
  if (!holdout_mode) {
    novel_adapted = reshape_like(*novel_source, labelled_source.shape);
    for (std::size_t i = 0; i < novel_adapted.n(); ++i) {
      test_novel_idx.push_back(i);
    }
    novel_pool = &novel_adapted;
    prov.test_novel_from = "novel_source";
  }
  prov.test_known_indices = test_known_idx;
  prov.test_novel_indices = test_novel_idx;

  const std::size_t n_test = test_known_idx.size() + test_novel_idx.size();
  pools.test_samples.resize(static_cast<Eigen::Index>(n_test), dim);
  Eigen::Index row = 0;
  for (auto i : test_known_idx) {
    pools.test_samples.row(row++) =
        labelled_test->samples.row(static_cast<Eigen::Index>(i));
    pools.test_anticipated.push_back(label_map[static_cast<std::size_t>(
        labelled_test->labels[i])]);
  }
  for (auto i : test_novel_idx) {
    pools.test_samples.row(row++) =
        novel_pool->samples.row(static_cast<Eigen::Index>(i));
    pools.test_anticipated.push_back(k + 1);
  }

  return OpenSetSplit(std::move(pools), k, labels_per_category, seed,
                      labelled_source.shape, std::move(prov));
}

// ---------------------------------------------------------------------------
// Split manifests: sample indices per pool, for exact reproduction.
// ---------------------------------------------------------------------------

inline nlohmann::json split_manifest(const OpenSetSplit& split) {
  const auto& prov = split.provenance();
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "split-manifest";
  j["seed"] = split.seed();
  j["K"] = split.k();
  j["labels_per_category"] = split.labels_per_category();
  j["mode"] = prov.mode;
  j["labelled_source"] = prov.labelled_source;
  if (!prov.novel_source.empty()) j["novel_source"] = prov.novel_source;
  if (!prov.labelled_test.empty()) j["labelled_test"] = prov.labelled_test;
  if (!prov.holdout_categories.empty()) {
    j["holdout_categories"] = prov.holdout_categories;
  }
  nlohmann::json lm = nlohmann::json::array();
  for (auto [orig, mapped] : prov.label_map) {
    lm.push_back({{"source", orig}, {"split", mapped}});
  }
  j["label_map"] = lm;
  j["test_novel_from"] = prov.test_novel_from;
  j["pools"] = {{"lab_train", prov.lab_indices},
                {"unlab_train", prov.unlab_indices},
                {"test_known", prov.test_known_indices},
                {"test_novel", prov.test_novel_indices}};
  return j;
}

inline void write_split_manifest(const std::string& path,
                                 const OpenSetSplit& split) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << split_manifest(split).dump(2) << "\n";
}

// Rebuilds a split from a manifest and the same source datasets. No RNG is
// involved; the result reproduces the original split exactly.
inline OpenSetSplit apply_split_manifest(const nlohmann::json& j,
                                         const Dataset& labelled_source,
                                         const Dataset* novel_source = nullptr,
                                         const Dataset* labelled_test = nullptr) {
  if (!j.contains("kind") || j.at("kind") != "split-manifest") {
    throw format_error("not a split manifest");
  }
  const int k = j.at("K").get<int>();
  const auto& pools_j = j.at("pools");

  std::vector<int> label_map(
      static_cast<std::size_t>(labelled_source.k_total()) + 1, 0);
  for (const auto& e : j.at("label_map")) {
    label_map.at(static_cast<std::size_t>(e.at("source").get<int>())) =
        e.at("split").get<int>();
  }

  OpenSetSplit::Pools pools;
  const auto dim = static_cast<Eigen::Index>(labelled_source.sample_dim());
  auto load_pool = [&](const char* key, const Dataset& src,
                       Eigen::MatrixXd& out, std::vector<int>* labels,
                       std::vector<std::size_t>& idx_out, int force_label) {
    auto idx = pools_j.at(key).get<std::vector<std::size_t>>();
    out.resize(static_cast<Eigen::Index>(idx.size()), dim);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= src.n()) {
        throw format_error(std::string("manifest index out of range in ") +
                           key);
      }
      out.row(static_cast<Eigen::Index>(i)) =
          src.samples.row(static_cast<Eigen::Index>(idx[i]));
      if (labels) {
        labels->push_back(force_label > 0
                              ? force_label
                              : label_map.at(static_cast<std::size_t>(
                                    src.labels[idx[i]])));
      }
    }
    idx_out = std::move(idx);
  };

  OpenSetSplit::Provenance prov;
  prov.mode = j.at("mode").get<std::string>();
  prov.test_novel_from = j.at("test_novel_from").get<std::string>();
  if (j.contains("novel_source")) {
    prov.novel_source = j.at("novel_source").get<std::string>();
  }
  if (j.contains("labelled_test")) {
    prov.labelled_test = j.at("labelled_test").get<std::string>();
  }
  if (j.contains("holdout_categories")) {
    prov.holdout_categories = j.at("holdout_categories").get<std::vector<int>>();
  }
  prov.labelled_source = j.at("labelled_source").get<std::string>();
  for (const auto& e : j.at("label_map")) {
    prov.label_map.emplace_back(e.at("source").get<int>(),
                                e.at("split").get<int>());
  }

  load_pool("lab_train", labelled_source, pools.lab_samples,
            &pools.lab_labels, prov.lab_indices, 0);
  load_pool("unlab_train", labelled_source, pools.unlab_samples,
            &pools.unlab_anticipated, prov.unlab_indices, 0);

  const Dataset* novel_pool = nullptr;
  Dataset novel_adapted;
  if (prov.test_novel_from == "novel_source") {
    if (!novel_source) {
      throw argument_error("manifest needs novel_source dataset");
    }
    novel_adapted = reshape_like(*novel_source, labelled_source.shape);
    novel_pool = &novel_adapted;
  } else if (prov.test_novel_from == "labelled_test") {
    if (!labelled_test) {
      throw argument_error("manifest needs labelled_test dataset");
    }
    novel_pool = labelled_test;
  } else {
    novel_pool = &labelled_source;
  }

  auto known_idx = pools_j.at("test_known").get<std::vector<std::size_t>>();
  auto novel_idx = pools_j.at("test_novel").get<std::vector<std::size_t>>();
  if (!known_idx.empty() && !labelled_test) {
    throw argument_error("manifest needs labelled_test dataset");
  }
  pools.test_samples.resize(
      static_cast<Eigen::Index>(known_idx.size() + novel_idx.size()), dim);
  Eigen::Index row = 0;
  for (auto i : known_idx) {
    pools.test_samples.row(row++) =
        labelled_test->samples.row(static_cast<Eigen::Index>(i));
    pools.test_anticipated.push_back(
        label_map.at(static_cast<std::size_t>(labelled_test->labels[i])));
  }
  for (auto i : novel_idx) {
    pools.test_samples.row(row++) =
        novel_pool->samples.row(static_cast<Eigen::Index>(i));
    pools.test_anticipated.push_back(k + 1);
  }
  prov.test_known_indices = std::move(known_idx);
  prov.test_novel_indices = std::move(novel_idx);

  return OpenSetSplit(std::move(pools), k,
                      j.at("labels_per_category").get<int>(),
                      j.at("seed").get<std::uint64_t>(), labelled_source.shape,
                      std::move(prov));
}

}  // namespace sslosr
