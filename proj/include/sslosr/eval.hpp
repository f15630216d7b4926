#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sslosr/losses.hpp"
#include "sslosr/split.hpp"
#include "sslosr/train.hpp"

namespace sslosr {

// Novelty scorers. `primary` is what each model was trained to separate:
// p(real) for FM classifiers, max p_arp for ARP classifiers. `alternative`
// is the ablation scorer (max softmax probability / raw max distance).
enum class ScorerKind { primary, alternative };

inline std::string to_string(ScorerKind s) {
  return s == ScorerKind::primary ? "preal" : "maxsoftmax";
}

inline ScorerKind scorer_from_string(const std::string& s) {
  if (s == "preal") return ScorerKind::primary;
  if (s == "maxsoftmax") return ScorerKind::alternative;
  throw argument_error("unknown scorer: " + s + " (preal|maxsoftmax)");
}

// Higher known_score = more confident the sample belongs to a labelled
// category. predicted_label is 1-based; ties break to the lower index.
struct ScoredSample {
  double known_score = 0.0;
  int predicted_label = 0;
  int anticipated_label = 0;
};

namespace detail {

inline int argmax_lowest_tie(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

}  // namespace detail

inline ScoredSample score_fm(const Eigen::VectorXd& logits,
                             ScorerKind scorer = ScorerKind::primary) {
  ScoredSample s;
  s.predicted_label = detail::argmax_lowest_tie(logits) + 1;
  if (scorer == ScorerKind::primary) {
    s.known_score = losses::p_fm_real(logits);
  } else {
    s.known_score = losses::softmax_k(logits).maxCoeff();
  }
  return s;
}

inline ScoredSample score_arp(const Eigen::VectorXd& embedding,
                              const ReciprocalPointSet& rp,
                              ScorerKind scorer = ScorerKind::primary) {
  Eigen::VectorXd d(rp.k());
  for (int j = 0; j < rp.k(); ++j) {
    d(j) = losses::arp_distance(embedding, rp.points.row(j).transpose()).d;
  }
  ScoredSample s;
  s.predicted_label = detail::argmax_lowest_tie(d) + 1;
  if (scorer == ScorerKind::primary) {
    s.known_score = losses::softmax_k(d).maxCoeff();
  } else {
    s.known_score = d.maxCoeff();
  }
  return s;
}

// ---------------------------------------------------------------------------
// AUROC
// ---------------------------------------------------------------------------

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

namespace detail {

// Mann-Whitney via average ranks: the fraction of (known, novel) pairs won
// by the known score, ties counting one half.
inline double auroc_rank(const std::vector<double>& known,
                         const std::vector<double>& novel) {
  struct Entry {
    double score;
    bool is_known;
  };
  std::vector<Entry> all;
  all.reserve(known.size() + novel.size());
  for (double s : known) all.push_back({s, true});
  for (double s : novel) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  double rank_sum_known = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) +
                                   static_cast<double>(j));  // 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].is_known) rank_sum_known += avg_rank;
    }
    i = j;
  }
  const double nk = static_cast<double>(known.size());
  const double nn = static_cast<double>(novel.size());
  const double u = rank_sum_known - nk * (nk + 1.0) / 2.0;
  return u / (nk * nn);
}

// Threshold sweep over the merged scores, descending; knowns are the
// positive class. Produces the ROC polyline from (0,0) to (1,1).
inline std::vector<RocPoint> roc_sweep(const std::vector<double>& known,
                                       const std::vector<double>& novel) {
  std::vector<double> thresholds;
  thresholds.reserve(known.size() + novel.size());
  thresholds.insert(thresholds.end(), known.begin(), known.end());
  thresholds.insert(thresholds.end(), novel.begin(), novel.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  std::vector<double> k_sorted = known, n_sorted = novel;
  std::sort(k_sorted.begin(), k_sorted.end(), std::greater<>());
  std::sort(n_sorted.begin(), n_sorted.end(), std::greater<>());

  std::vector<RocPoint> pts;
  pts.push_back({0.0, 0.0});
  std::size_t ki = 0, ni = 0;
  for (double t : thresholds) {
    while (ki < k_sorted.size() && k_sorted[ki] >= t) ++ki;
    while (ni < n_sorted.size() && n_sorted[ni] >= t) ++ni;
    pts.push_back({static_cast<double>(ni) / n_sorted.size(),
                   static_cast<double>(ki) / k_sorted.size()});
  }
  if (pts.back().fpr != 1.0 || pts.back().tpr != 1.0) {
    pts.push_back({1.0, 1.0});
  }
  return pts;
}

inline double trapezoid_area(const std::vector<RocPoint>& pts) {
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2;
  }
  return area;
}

}  // namespace detail

// AUROC with knowns as the positive class. Two independent routes are
// computed on every call (rank statistic and threshold-sweep trapezoid) and
// must agree to 1e-9; disagreement raises a numeric error.
inline double auroc(const std::vector<double>& known,
                    const std::vector<double>& novel,
                    std::vector<RocPoint>* roc_points = nullptr) {
  if (known.empty() || novel.empty()) {
    throw argument_error("auroc: both score pools must be non-empty");
  }
  const double by_rank = detail::auroc_rank(known, novel);
  auto pts = detail::roc_sweep(known, novel);
  const double by_sweep = detail::trapezoid_area(pts);
  if (std::abs(by_rank - by_sweep) > 1e-9) {
    throw numeric_error("auroc: rank statistic and ROC trapezoid disagree (" +
                        std::to_string(by_rank) + " vs " +
                        std::to_string(by_sweep) + ")");
  }
  if (roc_points) *roc_points = std::move(pts);
  return by_rank;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  double closed_accuracy = 0.0;
  std::optional<double> auroc;  // absent when the test set has no novels
  std::vector<RocPoint> roc_points;
  std::size_t n_test_known = 0;
  std::size_t n_test_novel = 0;
  std::size_t n_correct_known = 0;
  // run metadata
  std::string model_kind;
  std::string dataset;
  std::string scorer;
  int k = 0;
  int labels_per_category = 0;
  std::uint64_t seed = 0;

  // Table-style row: accuracy% | AUROC%.
  std::string table_row() const {
    char buf[64];
    if (auroc.has_value()) {
      std::snprintf(buf, sizeof(buf), "%.2f | %.2f", closed_accuracy * 100.0,
                    *auroc * 100.0);
    } else {
      std::snprintf(buf, sizeof(buf), "%.2f | ---", closed_accuracy * 100.0);
    }
    return buf;
  }
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["kind"] = "eval-report";
  j["closed_accuracy"] = r.closed_accuracy;
  if (r.auroc.has_value()) {
    j["auroc"] = *r.auroc;
  } else {
    j["auroc"] = nullptr;
  }
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.roc_points) pts.push_back({p.fpr, p.tpr});
  j["roc_points"] = pts;
  j["counts"] = {{"test_known", r.n_test_known},
                 {"test_novel", r.n_test_novel},
                 {"correct_known", r.n_correct_known}};
  j["meta"] = {{"model_kind", r.model_kind}, {"dataset", r.dataset},
               {"scorer", r.scorer},         {"k", r.k},
               {"labels_per_category", r.labels_per_category},
               {"seed", r.seed}};
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  if (!j.contains("kind") || j.at("kind") != "eval-report") {
    throw format_error("not an eval report");
  }
  EvalReport r;
  r.closed_accuracy = j.at("closed_accuracy");
  if (!j.at("auroc").is_null()) r.auroc = j.at("auroc").get<double>();
  for (const auto& p : j.at("roc_points")) {
    r.roc_points.push_back({p.at(0), p.at(1)});
  }
  r.n_test_known = j.at("counts").at("test_known");
  r.n_test_novel = j.at("counts").at("test_novel");
  r.n_correct_known = j.at("counts").at("correct_known");
  r.model_kind = j.at("meta").at("model_kind");
  r.dataset = j.at("meta").at("dataset");
  r.scorer = j.at("meta").at("scorer");
  r.k = j.at("meta").at("k");
  r.labels_per_category = j.at("meta").at("labels_per_category");
  r.seed = j.at("meta").at("seed");
  return r;
}

inline std::string metrics_csv_header() {
  return "run_id,model_kind,dataset,labels_per_category,seed,accuracy,auroc";
}

inline std::string metrics_csv_row(const EvalReport& r,
                                   const std::string& run_id) {
  char buf[256];
  if (r.auroc.has_value()) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%d,%llu,%.17g,%.17g",
                  run_id.c_str(), r.model_kind.c_str(), r.dataset.c_str(),
                  r.labels_per_category,
                  static_cast<unsigned long long>(r.seed), r.closed_accuracy,
                  *r.auroc);
  } else {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%d,%llu,%.17g,",
                  run_id.c_str(), r.model_kind.c_str(), r.dataset.c_str(),
                  r.labels_per_category,
                  static_cast<unsigned long long>(r.seed), r.closed_accuracy);
  }
  return buf;
}

// Scores one batch of test samples under the model kind's scorer.
inline std::vector<ScoredSample> score_batch(const TrainState& st,
                                             const Mat& x,
                                             ScorerKind scorer) {
  std::vector<ScoredSample> out(static_cast<std::size_t>(x.rows()));
  if (x.rows() == 0) return out;
  const auto readout = classifier_forward(st.cfg.arch, st.classifier, x);
  if (st.cfg.arch.mode == ClassifierMode::fm) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out[static_cast<std::size_t>(i)] =
          score_fm(readout.logits.row(i).transpose(), scorer);
    }
  } else {
    const auto rp = st.reciprocal_points();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out[static_cast<std::size_t>(i)] =
          score_arp(readout.embedding.row(i).transpose(), rp, scorer);
    }
  }
  return out;
}

// Closed-set accuracy over known test samples plus known-vs-novel AUROC.
inline EvalReport evaluate(const TrainState& st, const OpenSetSplit& split,
                           ScorerKind scorer = ScorerKind::primary) {
  const Mat& x = split.test_samples();
  const auto& anticipated = split.test_anticipated();
  const int k = split.k();

  EvalReport r;
  r.model_kind = to_string(st.cfg.kind);
  r.scorer = to_string(scorer);
  r.k = k;
  r.labels_per_category = split.labels_per_category();
  r.seed = st.cfg.seed;
  r.dataset = split.provenance().labelled_source;

  std::vector<double> known_scores, novel_scores;
  constexpr Eigen::Index kEvalBatch = 512;
  for (Eigen::Index start = 0; start < x.rows(); start += kEvalBatch) {
    const Eigen::Index len = std::min(kEvalBatch, x.rows() - start);
    auto scored = score_batch(st, x.middleRows(start, len), scorer);
    for (Eigen::Index i = 0; i < len; ++i) {
      const auto& s = scored[static_cast<std::size_t>(i)];
      const int want = anticipated[static_cast<std::size_t>(start + i)];
      if (want <= k) {
        ++r.n_test_known;
        if (s.predicted_label == want) ++r.n_correct_known;
        known_scores.push_back(s.known_score);
      } else {
        ++r.n_test_novel;
        novel_scores.push_back(s.known_score);
      }
    }
  }

  r.closed_accuracy =
      r.n_test_known == 0
          ? 0.0
          : static_cast<double>(r.n_correct_known) /
                static_cast<double>(r.n_test_known);
  if (!known_scores.empty() && !novel_scores.empty()) {
    r.auroc = auroc(known_scores, novel_scores, &r.roc_points);
  }
  return r;
}

inline void write_eval_report(const std::string& path, const EvalReport& r) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << to_json(r).dump(2) << "\n";
}

inline EvalReport read_eval_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open: " + path);
  nlohmann::json j;
  is >> j;
  return eval_report_from_json(j);
}

}  // namespace sslosr
