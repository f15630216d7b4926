#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "sslosr/batch.hpp"
#include "sslosr/split.hpp"
#include "sslosr/synth2d.hpp"

using namespace sslosr;

namespace {

// 3 categories x 10 samples, feature = (label, index) for easy tracing.
Dataset toy_dataset() {
  Dataset ds;
  ds.name = "toy";
  ds.shape = {2};
  ds.samples.resize(30, 2);
  ds.labels.resize(30);
  for (int i = 0; i < 30; ++i) {
    ds.labels[i] = i / 10 + 1;
    ds.samples(i, 0) = ds.labels[i];
    ds.samples(i, 1) = i;
  }
  ds.category_names = {"a", "b", "c"};
  return ds;
}

Synth2DSpec quad_spec(double sd = 1.0, std::size_t n = 100) {
  Synth2DSpec s;
  s.cluster_centers = {{0, 0}, {4, 0}, {0, 4}, {4, 4}};
  s.cluster_stddevs = {sd, sd, sd, sd};
  s.samples_per_cluster = n;
  s.novel_cluster_indices = {3};
  return s;
}

}  // namespace

TEST_CASE("gen_synth2d basic construction") {
  Synth2DSpec s;
  s.cluster_centers = {{0, 0}, {2, 0}, {0, 2}};
  s.cluster_stddevs = {0.5, 0.5, 0.5};
  s.samples_per_cluster = 100;
  auto [lab, novel] = gen_synth2d(s, 1);
  REQUIRE(lab.n() == 300);
  REQUIRE(lab.k_total() == 3);
  REQUIRE(novel.n() == 0);
}

TEST_CASE("zero stddev collapses samples onto the centers") {
  Synth2DSpec s;
  s.cluster_centers = {{1.5, -2.0}, {3.0, 4.0}};
  s.cluster_stddevs = {0.0, 0.0};
  s.samples_per_cluster = 5;
  auto [lab, novel] = gen_synth2d(s, 9);
  for (int i = 0; i < 5; ++i) {
    REQUIRE(lab.samples(i, 0) == 1.5);
    REQUIRE(lab.samples(i, 1) == -2.0);
  }
  for (int i = 5; i < 10; ++i) REQUIRE(lab.samples(i, 0) == 3.0);
}

TEST_CASE("withheld cluster comes back as the novel dataset") {
  auto [lab, novel] = gen_synth2d(quad_spec(), 7);
  REQUIRE(lab.k_total() == 3);
  REQUIRE(lab.n() == 300);
  REQUIRE(novel.n() == 100);
  // Sample means stay within 3 sigma / sqrt(n) of each center.
  const double tol = 3.0 / std::sqrt(100.0);
  REQUIRE(std::abs(novel.samples.col(0).mean() - 4.0) < tol);
  REQUIRE(std::abs(novel.samples.col(1).mean() - 4.0) < tol);
  REQUIRE(std::abs(lab.samples.topRows(100).col(0).mean() - 0.0) < tol);
}

TEST_CASE("per-cluster mean converges at n=10000") {
  auto spec = quad_spec(1.0, 10000);
  auto [lab, novel] = gen_synth2d(spec, 42);
  const double tol = 4.0 / std::sqrt(10000.0);
  REQUIRE(std::abs(lab.samples.block(10000, 0, 10000, 1).mean() - 4.0) < tol);
  REQUIRE(std::abs(lab.samples.block(10000, 1, 10000, 1).mean() - 0.0) < tol);
}

TEST_CASE("gen_synth2d is deterministic under seed") {
  auto [a1, n1] = gen_synth2d(quad_spec(), 5);
  auto [a2, n2] = gen_synth2d(quad_spec(), 5);
  REQUIRE(a1.samples == a2.samples);
  REQUIRE(n1.samples == n2.samples);
  auto [a3, n3] = gen_synth2d(quad_spec(), 6);
  REQUIRE(a1.samples != a3.samples);
}

TEST_CASE("spec validation") {
  auto s = quad_spec();
  s.novel_cluster_indices = {1, 2, 3};  // leaves one labelled cluster
  REQUIRE_THROWS_AS(s.validate(), argument_error);
  s = quad_spec();
  s.cluster_stddevs[1] = -0.5;
  REQUIRE_THROWS_AS(s.validate(), argument_error);
  s = quad_spec();
  s.novel_cluster_indices = {9};
  REQUIRE_THROWS_AS(s.validate(), argument_error);
}

// ---------------------------------------------------------------------------
// Split construction
// ---------------------------------------------------------------------------

TEST_CASE("holdout split on the toy dataset, enumerated by hand") {
  Dataset toy = toy_dataset();
  auto split = make_ssl_split(toy, nullptr, 2, std::vector<int>{3}, 11);

  REQUIRE(split.k() == 2);
  REQUIRE(split.n_lab() == 4);  // 2 categories x 2 labels
  REQUIRE(split.n_unlab() == 16);
  REQUIRE(split.n_test() == 10);  // all class-3 train samples become novels

  // No class-3 sample in either training pool (unobserved novelty).
  for (double v : split.lab_samples().col(0)) REQUIRE(v != 3.0);
  for (double v : split.unlab_samples().col(0)) REQUIRE(v != 3.0);
  // All test samples are the class-3 ones, anticipated K+1 = 3.
  for (double v : split.test_samples().col(0)) REQUIRE(v == 3.0);
  for (int l : split.test_anticipated()) REQUIRE(l == 3);
}

TEST_CASE("labelled and unlabelled pools are disjoint by index") {
  Dataset toy = toy_dataset();
  auto split = make_ssl_split(toy, nullptr, 3, std::vector<int>{1}, 2);
  const auto& prov = split.provenance();
  std::set<std::size_t> lab(prov.lab_indices.begin(), prov.lab_indices.end());
  for (auto i : prov.unlab_indices) REQUIRE(lab.count(i) == 0);
  REQUIRE(split.n_lab() == 2 * 3);
}

TEST_CASE("full label budget empties the unlabelled pool") {
  Dataset toy = toy_dataset();
  Dataset novel = toy_dataset();
  novel.name = "novel";
  auto split = make_ssl_split(toy, &novel, 10, std::nullopt, 3);
  REQUIRE(split.n_lab() == 30);
  REQUIRE(split.n_unlab() == 0);
}

TEST_CASE("split argument errors") {
  Dataset toy = toy_dataset();
  Dataset novel = toy_dataset();
  REQUIRE_THROWS_AS(make_ssl_split(toy, &novel, 2, std::vector<int>{3}, 1),
                    argument_error);  // both modes
  REQUIRE_THROWS_AS(make_ssl_split(toy, nullptr, 2, std::nullopt, 1),
                    argument_error);  // neither mode
  REQUIRE_THROWS_AS(make_ssl_split(toy, &novel, 11, std::nullopt, 1),
                    argument_error);  // exceeds class size
  REQUIRE_THROWS_AS(
      make_ssl_split(toy, nullptr, 2, std::vector<int>{2, 3}, 1),
      argument_error);  // K < 2 after holdout
}

TEST_CASE("cross-dataset split with a separate test portion") {
  auto [lab_train, novel_train] = gen_synth2d(quad_spec(), 3);
  auto [lab_test, novel_test] = gen_synth2d(quad_spec(1.0, 50), 1003);
  auto split =
      make_ssl_split(lab_train, &novel_test, 5, std::nullopt, 3, &lab_test);
  REQUIRE(split.k() == 3);
  REQUIRE(split.n_lab() == 15);
  REQUIRE(split.n_unlab() == 285);
  REQUIRE(split.n_test() == 150 + 50);
  int novels = 0;
  for (int l : split.test_anticipated()) {
    REQUIRE(l >= 1);
    REQUIRE(l <= 4);
    novels += (l == 4);
  }
  REQUIRE(novels == 50);
  for (int l : split.unlab_anticipated()) REQUIRE(l <= 3);
}

TEST_CASE("split determinism: identical inputs give identical splits") {
  auto [lab, novel] = gen_synth2d(quad_spec(), 4);
  auto s1 = make_ssl_split(lab, &novel, 7, std::nullopt, 99);
  auto s2 = make_ssl_split(lab, &novel, 7, std::nullopt, 99);
  REQUIRE(s1.lab_samples() == s2.lab_samples());
  REQUIRE(s1.unlab_samples() == s2.unlab_samples());
  REQUIRE(s1.test_samples() == s2.test_samples());
  REQUIRE(s1.provenance().lab_indices == s2.provenance().lab_indices);
  auto s3 = make_ssl_split(lab, &novel, 7, std::nullopt, 100);
  REQUIRE(s1.provenance().lab_indices != s3.provenance().lab_indices);
}

TEST_CASE("labelled pool has exactly labels_per_category per category") {
  auto [lab, novel] = gen_synth2d(quad_spec(), 8);
  auto split = make_ssl_split(lab, &novel, 12, std::nullopt, 5);
  std::vector<int> count(4, 0);
  for (int l : split.lab_labels()) count[static_cast<std::size_t>(l)]++;
  REQUIRE(count[1] == 12);
  REQUIRE(count[2] == 12);
  REQUIRE(count[3] == 12);
}

TEST_CASE("manifest round-trip reproduces the split exactly") {
  Dataset toy = toy_dataset();

  SECTION("holdout mode without test portion") {
    auto split = make_ssl_split(toy, nullptr, 2, std::vector<int>{2}, 17);
    auto j = split_manifest(split);
    auto redo = apply_split_manifest(j, toy);
    REQUIRE(redo.lab_samples() == split.lab_samples());
    REQUIRE(redo.unlab_samples() == split.unlab_samples());
    REQUIRE(redo.test_samples() == split.test_samples());
    REQUIRE(redo.test_anticipated() == split.test_anticipated());
    REQUIRE(redo.lab_labels() == split.lab_labels());
    REQUIRE(redo.k() == split.k());
  }
  SECTION("cross-dataset mode") {
    auto [lab, novel] = gen_synth2d(quad_spec(), 21);
    auto [lab_test, novel_test] = gen_synth2d(quad_spec(1.0, 30), 22);
    auto split = make_ssl_split(lab, &novel_test, 4, std::nullopt, 5,
                                &lab_test);
    auto j = split_manifest(split);
    auto redo = apply_split_manifest(j, lab, &novel_test, &lab_test);
    REQUIRE(redo.test_samples() == split.test_samples());
    REQUIRE(redo.lab_samples() == split.lab_samples());
  }
  SECTION("holdout manifest keeps held-out indices out of train pools") {
    auto split = make_ssl_split(toy, nullptr, 2, std::vector<int>{3}, 23);
    auto j = split_manifest(split);
    for (auto i : j.at("pools").at("lab_train")) {
      REQUIRE(toy.labels[i.get<std::size_t>()] != 3);
    }
    for (auto i : j.at("pools").at("unlab_train")) {
      REQUIRE(toy.labels[i.get<std::size_t>()] != 3);
    }
  }
}

TEST_CASE("access counters track pool reads") {
  Dataset toy = toy_dataset();
  auto split = make_ssl_split(toy, nullptr, 2, std::vector<int>{3}, 1);
  auto before = split.access_counts();
  split.lab_samples();
  split.lab_labels();
  split.test_samples();
  auto after = split.access_counts();
  REQUIRE(after.lab_train == before.lab_train + 2);
  REQUIRE(after.test_samples == before.test_samples + 1);
  REQUIRE(after.unlab_train == before.unlab_train);
  REQUIRE(after.test_anticipated == before.test_anticipated);
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

TEST_CASE("batch sizes include the final short batch") {
  auto batches = batch_indices(10, 4, 1, 0);
  REQUIRE(batches.size() == 3);
  REQUIRE(batches[0].size() == 4);
  REQUIRE(batches[1].size() == 4);
  REQUIRE(batches[2].size() == 2);
}

TEST_CASE("batches are deterministic per (seed, epoch) and differ across epochs") {
  auto a = batch_indices(100, 16, 7, 0);
  auto b = batch_indices(100, 16, 7, 0);
  REQUIRE(a == b);
  auto c = batch_indices(100, 16, 7, 1);
  REQUIRE(a != c);

  // Each epoch is a permutation of 0..99.
  std::set<std::size_t> seen;
  for (const auto& batch : c) seen.insert(batch.begin(), batch.end());
  REQUIRE(seen.size() == 100);
}

TEST_CASE("empty pool yields an empty sequence") {
  REQUIRE(batch_indices(0, 8, 1, 0).empty());
  REQUIRE_THROWS_AS(batch_indices(5, 0, 1, 0), argument_error);
}

TEST_CASE("batch stream fast-forward matches sequential consumption") {
  BatchStream a(25, 4, 3), b(25, 4, 3);
  std::vector<std::size_t> last;
  for (int i = 0; i < 20; ++i) last = a.next();
  b.advance_to(19);
  REQUIRE(b.next() == last);
}
