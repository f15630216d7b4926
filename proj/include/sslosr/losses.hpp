#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sslosr/ad.hpp"
#include "sslosr/error.hpp"
#include "sslosr/nets.hpp"

// All training objectives as pure functions. Each objective exists once, as
// a tape-graph builder; the plain overloads lift their inputs to constants
// and read the scalar back off the same graph.
//
// Label convention: public APIs take 1-based category labels (C_K = 1..K).
namespace sslosr::losses {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Log arguments are clamped here to stay finite; only saturated
// probabilities are affected.
inline constexpr double kLogFloor = 1e-7;

// Scalar objective with a named breakdown of its additive components.
struct LossValue {
  double value = 0.0;
  std::vector<std::pair<std::string, double>> terms;
  bool vacuous_supervised = false;  // labelled batch was empty

  double term(const std::string& name) const {
    for (const auto& [n, v] : terms) {
      if (n == name) return v;
    }
    throw argument_error("LossValue: no term " + name);
  }
};

struct LossGraph {
  ad::Value total;
  std::vector<std::pair<std::string, ad::Value>> terms;
  bool vacuous_supervised = false;
};

namespace detail {

inline void check_labels(const std::vector<int>& labels, int k,
                         const char* where) {
  for (int l : labels) {
    if (l < 1 || l > k) {
      throw argument_error(std::string(where) + ": label " +
                           std::to_string(l) + " outside C_K = 1.." +
                           std::to_string(k));
    }
  }
}

inline std::vector<int> to_zero_based(const std::vector<int>& labels) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] - 1;
  return out;
}

inline LossValue extract(const LossGraph& g, const char* op) {
  LossValue lv;
  lv.vacuous_supervised = g.vacuous_supervised;
  lv.value = g.total.scalar();
  for (const auto& [name, v] : g.terms) {
    const double x = v.scalar();
    if (!std::isfinite(x)) {
      throw numeric_error(std::string(op) + ": non-finite term " + name);
    }
    lv.terms.emplace_back(name, x);
  }
  if (!std::isfinite(lv.value)) {
    throw numeric_error(std::string(op) + ": non-finite value");
  }
  return lv;
}

inline void require_finite(const Mat& m, const char* where) {
  if (!m.allFinite()) {
    throw numeric_error(std::string(where) + ": non-finite input");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Probability functions (plain)
// ---------------------------------------------------------------------------

// Stable softmax over K logits.
inline Vec softmax_k(const Vec& logits) {
  detail::require_finite(logits, "softmax_k");
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

// log(sum_i exp(v_i) [+ exp(0)]) with max subtraction.
inline double log_sum_exp(const Vec& v, bool with_zero = false) {
  if (v.size() == 0 && !with_zero) {
    throw argument_error("log_sum_exp: empty vector");
  }
  double m = with_zero ? 0.0 : v.maxCoeff();
  if (v.size() > 0) m = std::max(m, v.maxCoeff());
  double s = with_zero ? std::exp(-m) : 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v(i) - m);
  return m + std::log(s);
}

// p(y = K+1 | x) under the zero-fixed K+1'th logit: 1 / (sum_i exp(C^i) + 1).
inline double p_fm_fake(const Vec& logits) {
  detail::require_finite(logits, "p_fm_fake");
  return std::exp(-log_sum_exp(logits, /*with_zero=*/true));
}

// Complement of p_fm_fake: probability of the sample being real.
inline double p_fm_real(const Vec& logits) {
  detail::require_finite(logits, "p_fm_real");
  const double lse = log_sum_exp(logits, /*with_zero=*/false);
  return lse >= 0 ? 1.0 / (1.0 + std::exp(-lse))
                  : std::exp(lse) / (1.0 + std::exp(lse));
}

struct ArpDistance {
  double d;    // d_e - d_d
  double d_e;  // (1/m) * ||C - P||^2
  double d_d;  // C . P
};

inline ArpDistance arp_distance(const Vec& embedding, const Vec& point) {
  if (embedding.size() != point.size()) {
    throw argument_error("arp_distance: width mismatch (" +
                         std::to_string(embedding.size()) + " vs " +
                         std::to_string(point.size()) + ")");
  }
  const double m = static_cast<double>(embedding.size());
  ArpDistance out;
  out.d_e = (embedding - point).squaredNorm() / m;
  out.d_d = embedding.dot(point);
  out.d = out.d_e - out.d_d;
  return out;
}

// Softmax over the K distance values d(C(x), P^j): the category with the
// farthest reciprocal point gets the largest probability.
inline Vec p_arp(const Vec& embedding, const Mat& points) {
  if (points.rows() < 2) throw argument_error("p_arp: K must be >= 2");
  if (points.cols() != embedding.size()) {
    throw argument_error("p_arp: embedding width != point width");
  }
  Vec d(points.rows());
  for (Eigen::Index j = 0; j < points.rows(); ++j) {
    d(j) = arp_distance(embedding, points.row(j).transpose()).d;
  }
  return softmax_k(d);
}

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

// Mean cross-entropy of a K-way softmax at the given 0-based labels.
inline ad::Value nll_softmax_graph(ad::Value logits,
                                   const std::vector<int>& labels0) {
  auto lse = ad::logsumexp_rows(logits, false);
  auto picked = ad::select_cols(logits, labels0);
  return ad::mean_all(ad::sub(lse, picked));
}

// Eq. (1) analogue: supervised loss over an explicit K+1-node classifier,
// fakes pseudo-labelled into node K+1.
inline LossGraph kplus1_dc_graph(ad::Value logits_fake, ad::Value logits_lab,
                                 const std::vector<int>& labels1) {
  const int kp1 = static_cast<int>(logits_fake.cols());
  if (logits_lab.cols() != kp1) {
    throw argument_error("kplus1_dc_loss: logit widths disagree");
  }
  detail::check_labels(labels1, kp1 - 1, "kplus1_dc_loss");
  std::vector<int> fake_labels0(static_cast<std::size_t>(logits_fake.rows()),
                                kp1 - 1);
  LossGraph g;
  auto fake = nll_softmax_graph(logits_fake, fake_labels0);
  auto sup = nll_softmax_graph(logits_lab, detail::to_zero_based(labels1));
  g.terms = {{"fake", fake}, {"supervised", sup}};
  g.total = ad::add(fake, sup);
  return g;
}

// Eq. (2): -E log p_fake(G(z)) - E log(1 - p_fake(x_unlab)) - E log p(y|x).
inline LossGraph fm_dc_graph(ad::Value logits_fake, ad::Value logits_unlab,
                             ad::Value logits_lab,
                             const std::vector<int>& labels1) {
  ad::Tape& t = *logits_fake.tape;
  const auto k = logits_fake.cols();
  if (logits_fake.rows() == 0) {
    throw argument_error("fm_dc_loss: empty fake batch");
  }
  if ((logits_unlab.rows() > 0 && logits_unlab.cols() != k) ||
      (logits_lab.rows() > 0 && logits_lab.cols() != k)) {
    throw argument_error("fm_dc_loss: logit widths disagree");
  }
  detail::check_labels(labels1, static_cast<int>(k), "fm_dc_loss");

  LossGraph g;
  // -log p_fake = log(sum exp C^i + 1)
  auto fake = ad::mean_all(ad::logsumexp_rows(logits_fake, true));
  g.terms.emplace_back("fake", fake);

  // -log(1 - p_fake) = log(sum exp + 1) - log(sum exp)
  ad::Value unlab;
  if (logits_unlab.rows() > 0) {
    unlab = ad::mean_all(ad::sub(ad::logsumexp_rows(logits_unlab, true),
                                 ad::logsumexp_rows(logits_unlab, false)));
  } else {
    unlab = t.scalar(0.0);
  }
  g.terms.emplace_back("unlab_real", unlab);

  ad::Value sup;
  if (logits_lab.rows() > 0) {
    if (static_cast<Eigen::Index>(labels1.size()) != logits_lab.rows()) {
      throw argument_error("fm_dc_loss: labels/batch size mismatch");
    }
    sup = nll_softmax_graph(logits_lab, detail::to_zero_based(labels1));
  } else {
    sup = t.scalar(0.0);
    g.vacuous_supervised = true;
  }
  g.terms.emplace_back("supervised", sup);

  g.total = ad::add(ad::add(fake, unlab), sup);
  return g;
}

// Eq. (3): squared L2 distance between feature means (the standard
// feature-matching estimator); per_pair matches sample-by-sample instead.
inline LossGraph fm_gen_graph(ad::Value features_real, ad::Value features_fake,
                              bool per_pair = false) {
  if (features_real.rows() == 0 || features_fake.rows() == 0) {
    throw argument_error("fm_gen_loss: empty feature batch");
  }
  if (features_real.cols() != features_fake.cols()) {
    throw argument_error("fm_gen_loss: feature widths disagree");
  }
  LossGraph g;
  if (per_pair) {
    if (features_real.rows() != features_fake.rows()) {
      throw argument_error("fm_gen_loss: per-pair needs equal batch sizes");
    }
    g.total = ad::mean_all(
        ad::row_sum(ad::square(ad::sub(features_real, features_fake))));
  } else {
    auto diff = ad::sub(ad::mean_over_rows(features_real),
                        ad::mean_over_rows(features_fake));
    g.total = ad::sum_all(ad::square(diff));
  }
  g.terms = {{"feature_match", g.total}};
  return g;
}

// Batched reciprocal-point distances: d(C(x), P^j) for every sample/point
// pair, split into the Euclidean and dot-product parts.
struct ArpDistGraph {
  ad::Value d;    // B x K
  ad::Value d_e;  // B x K
};

inline ArpDistGraph arp_distances_graph(ad::Value embeddings,
                                        ad::Value points) {
  if (embeddings.cols() != points.cols()) {
    throw argument_error("arp distances: embedding width != point width");
  }
  const double m = static_cast<double>(points.cols());
  auto emb_sq = ad::row_sum(ad::square(embeddings));            // B x 1
  auto pts_sq = ad::transpose(ad::row_sum(ad::square(points))); // 1 x K
  auto cross = ad::matmul(embeddings, ad::transpose(points));   // B x K
  ArpDistGraph g;
  g.d_e = ad::scale(
      ad::add(ad::add(emb_sq, pts_sq), ad::scale(cross, -2.0)), 1.0 / m);
  g.d = ad::sub(g.d_e, cross);
  return g;
}

// Eq. (4): -E[log p_arp(y|x)] + gamma * E[max(d_e(C(x), P^y) - R_y, 0)].
inline LossGraph arp_classifier_graph(ad::Value embeddings,
                                      const std::vector<int>& labels1,
                                      ad::Value points, ad::Value range,
                                      double gamma) {
  if (embeddings.rows() == 0) {
    throw argument_error("arp_classifier_loss: empty batch");
  }
  detail::check_labels(labels1, static_cast<int>(points.rows()),
                       "arp_classifier_loss");
  auto labels0 = detail::to_zero_based(labels1);
  auto dist = arp_distances_graph(embeddings, points);

  auto ce = ad::mean_all(ad::sub(ad::logsumexp_rows(dist.d, false),
                                 ad::select_cols(dist.d, labels0)));
  auto excess = ad::sub(ad::select_cols(dist.d_e, labels0),
                        ad::gather_rows(range, labels0));
  auto hinge = ad::scale(ad::mean_all(ad::relu(excess)), gamma);

  LossGraph g;
  g.terms = {{"cross_entropy", ce}, {"hinge", hinge}};
  g.total = ad::add(ce, hinge);
  return g;
}

// Mean Shannon entropy of p_arp over a generated batch; I(G(z)) in the text.
inline ad::Value entropy_graph(ad::Value embeddings_fake, ad::Value points) {
  if (embeddings_fake.rows() == 0) {
    throw argument_error("entropy_I: empty batch");
  }
  auto dist = arp_distances_graph(embeddings_fake, points);
  auto lse = ad::logsumexp_rows(dist.d, false);  // B x 1
  auto logp = ad::sub(dist.d, lse);              // B x K
  auto p = ad::exp(logp);
  return ad::neg(ad::mean_all(ad::row_sum(ad::mul(p, logp))));
}

// Eq. (5): the original GAN discriminator loss.
inline LossGraph arp_gan_d_graph(ad::Value d_real, ad::Value d_fake) {
  if (d_real.rows() == 0 || d_fake.rows() == 0) {
    throw argument_error("arp_gan_d_loss: empty probability batch");
  }
  auto real = ad::neg(
      ad::mean_all(ad::log(ad::clamp(d_real, kLogFloor, 1.0))));
  auto fake = ad::neg(ad::mean_all(ad::log(
      ad::clamp(ad::sub(d_fake.tape->scalar(1.0), d_fake), kLogFloor, 1.0))));
  LossGraph g;
  g.terms = {{"real", real}, {"fake", fake}};
  g.total = ad::add(real, fake);
  return g;
}

// Eq. (6): -E[log D(G(z))] - I(G(z)); entropy_weight 0 recovers the original
// GAN generator objective.
inline LossGraph arp_gan_g_graph(ad::Value d_fake, ad::Value embeddings_fake,
                                 ad::Value points,
                                 double entropy_weight = 1.0) {
  if (d_fake.rows() == 0) {
    throw argument_error("arp_gan_g_loss: empty probability batch");
  }
  auto adv = ad::neg(
      ad::mean_all(ad::log(ad::clamp(d_fake, kLogFloor, 1.0))));
  ad::Value neg_ent;
  if (entropy_weight != 0.0) {
    neg_ent = ad::scale(entropy_graph(embeddings_fake, points),
                        -entropy_weight);
  } else {
    neg_ent = d_fake.tape->scalar(0.0);
  }
  LossGraph g;
  g.terms = {{"adversarial", adv}, {"neg_entropy", neg_ent}};
  g.total = ad::add(adv, neg_ent);
  return g;
}

// Eq. (7): -I(G(z)) + the Eq. (4) classifier loss. Either batch may be
// empty, dropping its term.
inline LossGraph arp_gan_c_graph(ad::Value embeddings_fake,
                                 ad::Value embeddings_lab,
                                 const std::vector<int>& labels1,
                                 ad::Value points, ad::Value range,
                                 double gamma, double entropy_weight = 1.0) {
  ad::Tape& t = *points.tape;
  LossGraph g;
  ad::Value neg_ent = (embeddings_fake.rows() > 0 && entropy_weight != 0.0)
                          ? ad::scale(entropy_graph(embeddings_fake, points),
                                      -entropy_weight)
                          : t.scalar(0.0);
  g.terms.emplace_back("neg_entropy", neg_ent);

  ad::Value ce, hinge;
  if (embeddings_lab.rows() > 0) {
    auto sup = arp_classifier_graph(embeddings_lab, labels1, points, range,
                                    gamma);
    ce = sup.terms[0].second;
    hinge = sup.terms[1].second;
  } else {
    ce = t.scalar(0.0);
    hinge = t.scalar(0.0);
    g.vacuous_supervised = true;
  }
  g.terms.emplace_back("cross_entropy", ce);
  g.terms.emplace_back("hinge", hinge);
  g.total = ad::add(ad::add(neg_ent, ce), hinge);
  return g;
}

// ---------------------------------------------------------------------------
// Plain wrappers (spec operations over matrices)
// ---------------------------------------------------------------------------

inline LossValue kplus1_dc_loss(const Mat& logits_fake, const Mat& logits_lab,
                                const std::vector<int>& labels1) {
  ad::Tape t;
  return detail::extract(
      kplus1_dc_graph(t.constant(logits_fake), t.constant(logits_lab),
                      labels1),
      "kplus1_dc_loss");
}

inline LossValue fm_dc_loss(const Mat& logits_fake, const Mat& logits_unlab,
                            const Mat& logits_lab,
                            const std::vector<int>& labels1) {
  ad::Tape t;
  return detail::extract(
      fm_dc_graph(t.constant(logits_fake), t.constant(logits_unlab),
                  t.constant(logits_lab), labels1),
      "fm_dc_loss");
}

inline LossValue fm_gen_loss(const Mat& features_real, const Mat& features_fake,
                             bool per_pair = false) {
  ad::Tape t;
  return detail::extract(fm_gen_graph(t.constant(features_real),
                                      t.constant(features_fake), per_pair),
                         "fm_gen_loss");
}

inline LossValue arp_classifier_loss(const Mat& embeddings,
                                     const std::vector<int>& labels1,
                                     const ReciprocalPointSet& rp) {
  ad::Tape t;
  return detail::extract(
      arp_classifier_graph(t.constant(embeddings), labels1,
                           t.constant(rp.points), t.constant(rp.range),
                           rp.gamma),
      "arp_classifier_loss");
}

inline double entropy_I(const Mat& embeddings_fake, const Mat& points) {
  ad::Tape t;
  const double v =
      entropy_graph(t.constant(embeddings_fake), t.constant(points)).scalar();
  if (!std::isfinite(v)) throw numeric_error("entropy_I: non-finite value");
  return v;
}

inline LossValue arp_gan_d_loss(const Vec& d_real, const Vec& d_fake) {
  ad::Tape t;
  return detail::extract(
      arp_gan_d_graph(t.constant(d_real), t.constant(d_fake)),
      "arp_gan_d_loss");
}

inline LossValue arp_gan_g_loss(const Vec& d_fake, const Mat& embeddings_fake,
                                const Mat& points) {
  ad::Tape t;
  return detail::extract(
      arp_gan_g_graph(t.constant(d_fake), t.constant(embeddings_fake),
                      t.constant(points)),
      "arp_gan_g_loss");
}

inline LossValue arp_gan_c_loss(const Mat& embeddings_fake,
                                const Mat& embeddings_lab,
                                const std::vector<int>& labels1,
                                const ReciprocalPointSet& rp) {
  ad::Tape t;
  return detail::extract(
      arp_gan_c_graph(t.constant(embeddings_fake), t.constant(embeddings_lab),
                      labels1, t.constant(rp.points), t.constant(rp.range),
                      rp.gamma),
      "arp_gan_c_loss");
}

}  // namespace sslosr::losses
