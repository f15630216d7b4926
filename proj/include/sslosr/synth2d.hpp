#pragma once

#include <array>
#include <string>
#include <vector>

#include "sslosr/dataset.hpp"
#include "sslosr/rng.hpp"

namespace sslosr {

// Isotropic-Gaussian cluster mixture on the plane. Clusters listed in
// novel_cluster_indices (0-based) are withheld from the labelled domain and
// returned as a separate novel dataset.
struct Synth2DSpec {
  std::vector<std::array<double, 2>> cluster_centers;
  std::vector<double> cluster_stddevs;
  std::size_t samples_per_cluster = 100;
  std::vector<std::size_t> novel_cluster_indices;

  void validate() const {
    if (cluster_centers.size() != cluster_stddevs.size()) {
      throw argument_error("Synth2DSpec: centers/stddevs size mismatch");
    }
    if (samples_per_cluster == 0) {
      throw argument_error("Synth2DSpec: samples_per_cluster must be >= 1");
    }
    for (double s : cluster_stddevs) {
      if (!(s >= 0.0)) throw argument_error("Synth2DSpec: stddevs must be >= 0");
    }
    for (auto i : novel_cluster_indices) {
      if (i >= cluster_centers.size()) {
        throw argument_error("Synth2DSpec: novel cluster index out of range");
      }
    }
    if (cluster_centers.size() - novel_cluster_indices.size() < 2) {
      throw argument_error(
          "Synth2DSpec: at least 2 labelled clusters must remain");
    }
  }
};

// Returns (labelled-domain data, novel-cluster data). Labelled clusters get
// contiguous labels 1..K in listed order; novel clusters likewise within
// their own dataset. Deterministic under seed.
inline std::pair<Dataset, Dataset> gen_synth2d(const Synth2DSpec& spec,
                                               std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);

  std::vector<bool> is_novel(spec.cluster_centers.size(), false);
  for (auto i : spec.novel_cluster_indices) is_novel[i] = true;

  Dataset lab, novel;
  lab.name = "synth2d";
  novel.name = "synth2d-novel";
  lab.shape = novel.shape = {2};

  std::size_t n_lab = 0, n_novel = 0;
  for (std::size_t c = 0; c < spec.cluster_centers.size(); ++c) {
    (is_novel[c] ? n_novel : n_lab) += spec.samples_per_cluster;
  }
  lab.samples.resize(static_cast<Eigen::Index>(n_lab), 2);
  novel.samples.resize(static_cast<Eigen::Index>(n_novel), 2);
  lab.labels.reserve(n_lab);
  novel.labels.reserve(n_novel);

  int lab_cat = 0, novel_cat = 0;
  Eigen::Index li = 0, ni = 0;
  for (std::size_t c = 0; c < spec.cluster_centers.size(); ++c) {
    const auto& center = spec.cluster_centers[c];
    const double s = spec.cluster_stddevs[c];
    const int cat = is_novel[c] ? ++novel_cat : ++lab_cat;
    for (std::size_t i = 0; i < spec.samples_per_cluster; ++i) {
      const double x = center[0] + s * rng.normal();
      const double y = center[1] + s * rng.normal();
      if (is_novel[c]) {
        novel.samples(ni, 0) = x;
        novel.samples(ni, 1) = y;
        novel.labels.push_back(cat);
        ++ni;
      } else {
        lab.samples(li, 0) = x;
        lab.samples(li, 1) = y;
        lab.labels.push_back(cat);
        ++li;
      }
    }
  }

  lab.category_names = detail::default_category_names(lab_cat);
  novel.category_names = detail::default_category_names(novel_cat);
  lab.validate();
  if (novel.n() > 0) novel.validate();
  return {std::move(lab), std::move(novel)};
}

}  // namespace sslosr
