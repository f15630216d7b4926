#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sslosr/batch.hpp"
#include "sslosr/losses.hpp"
#include "sslosr/nets.hpp"
#include "sslosr/optim.hpp"
#include "sslosr/split.hpp"
#include "sslosr/tensor_io.hpp"

namespace sslosr {

enum class ModelKind { softmax, arp, fm_gan, arp_gan };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::softmax: return "softmax";
    case ModelKind::arp: return "arp";
    case ModelKind::fm_gan: return "fm-gan";
    case ModelKind::arp_gan: return "arp-gan";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "softmax") return ModelKind::softmax;
  if (s == "arp") return ModelKind::arp;
  if (s == "fm-gan") return ModelKind::fm_gan;
  if (s == "arp-gan") return ModelKind::arp_gan;
  throw argument_error("unknown model kind: " + s);
}

inline bool uses_generator(ModelKind k) {
  return k == ModelKind::fm_gan || k == ModelKind::arp_gan;
}
inline bool uses_discriminator(ModelKind k) { return k == ModelKind::arp_gan; }
inline bool uses_reciprocal_points(ModelKind k) {
  return k == ModelKind::arp || k == ModelKind::arp_gan;
}

struct TrainConfig {
  ModelKind kind = ModelKind::softmax;
  int epochs = 50;
  int batch_size = 64;
  double lr = 2e-4;
  double lr_classifier = -1;  // < 0: use lr
  double lr_generator = -1;
  double lr_discriminator = -1;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 1;
  double gamma = 0.1;
  int eval_every = 0;  // snapshot cadence in steps; 0 = once per epoch
  double entropy_weight = 1.0;      // Eq. 6/7 ablation: 0 drops I(G(z))
  bool fold_labelled_into_real = false;  // Eq. 2 ablation
  bool fm_per_pair = false;              // Eq. 3 per-pair variant
  bool fresh_noise_for_classifier = true;
  double divergence_threshold = 1e4;
  ArchConfig arch;

  double classifier_lr() const { return lr_classifier < 0 ? lr : lr_classifier; }
  double generator_lr() const { return lr_generator < 0 ? lr : lr_generator; }
  double discriminator_lr() const {
    return lr_discriminator < 0 ? lr : lr_discriminator;
  }

  void validate() const {
    if (epochs < 1 || batch_size < 1) {
      throw argument_error("TrainConfig: positive epochs and batch_size");
    }
    if (classifier_lr() <= 0 || generator_lr() <= 0 ||
        discriminator_lr() <= 0) {
      throw argument_error("TrainConfig: positive learning rates");
    }
    arch.validate();
    const bool arp_mode = uses_reciprocal_points(kind);
    if (arp_mode != (arch.mode == ClassifierMode::arp)) {
      throw argument_error(
          "TrainConfig: classifier mode does not match model kind");
    }
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"model_kind", to_string(c.kind)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"lr_classifier", c.lr_classifier},
          {"lr_generator", c.lr_generator},
          {"lr_discriminator", c.lr_discriminator},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"seed", c.seed},
          {"gamma", c.gamma},
          {"eval_every", c.eval_every},
          {"entropy_weight", c.entropy_weight},
          {"fold_labelled_into_real", c.fold_labelled_into_real},
          {"fm_per_pair", c.fm_per_pair},
          {"fresh_noise_for_classifier", c.fresh_noise_for_classifier},
          {"divergence_threshold", c.divergence_threshold},
          {"arch", to_json(c.arch)}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.kind = model_kind_from_string(j.at("model_kind"));
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.lr_classifier = j.value("lr_classifier", -1.0);
  c.lr_generator = j.value("lr_generator", -1.0);
  c.lr_discriminator = j.value("lr_discriminator", -1.0);
  c.beta1 = j.value("beta1", 0.5);
  c.beta2 = j.value("beta2", 0.999);
  c.seed = j.at("seed");
  c.gamma = j.value("gamma", 0.1);
  c.eval_every = j.value("eval_every", 0);
  c.entropy_weight = j.value("entropy_weight", 1.0);
  c.fold_labelled_into_real = j.value("fold_labelled_into_real", false);
  c.fm_per_pair = j.value("fm_per_pair", false);
  c.fresh_noise_for_classifier = j.value("fresh_noise_for_classifier", true);
  c.divergence_threshold = j.value("divergence_threshold", 1e4);
  c.arch = arch_from_json(j.at("arch"));
  return c;
}

// Mutable training state: parameters, optimizer moments, loss history and
// the RNG stream. A checkpoint captures all of it.
struct TrainState {
  TrainConfig cfg;
  ParamSet classifier, generator, discriminator, rpoints;
  Adam opt_classifier, opt_generator, opt_discriminator, opt_rpoints;
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, std::vector<double>>> history;
  Rng rng;
  bool diverged = false;

  void record(const std::string& name, double v) {
    for (auto& [n, series] : history) {
      if (n == name) {
        series.push_back(v);
        return;
      }
    }
    history.emplace_back(name, std::vector<double>{v});
  }

  const std::vector<double>& series(const std::string& name) const {
    for (const auto& [n, s] : history) {
      if (n == name) return s;
    }
    throw argument_error("TrainState: no history series " + name);
  }

  bool has_series(const std::string& name) const {
    for (const auto& [n, s] : history) {
      if (n == name) return true;
    }
    return false;
  }

  ReciprocalPointSet reciprocal_points() const {
    return ReciprocalPointSet::from_params(rpoints, cfg.gamma);
  }
};

namespace detail {

inline Mat take_rows(const Mat& src, const std::vector<std::size_t>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        src.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

template <typename T>
std::vector<T> take(const std::vector<T>& src,
                    const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(src[i]);
  return out;
}

}  // namespace detail

inline TrainState init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.cfg = cfg;
  const auto ckind = cfg.arch.mode == ClassifierMode::fm
                         ? ParamKind::classifier_fm
                         : ParamKind::classifier_arp;
  st.classifier = init_params(ckind, derive_seed(cfg.seed, 1), cfg.arch);
  if (uses_generator(cfg.kind)) {
    st.generator =
        init_params(ParamKind::generator, derive_seed(cfg.seed, 2), cfg.arch);
  }
  if (uses_discriminator(cfg.kind)) {
    st.discriminator = init_params(ParamKind::discriminator,
                                   derive_seed(cfg.seed, 3), cfg.arch);
  }
  if (uses_reciprocal_points(cfg.kind)) {
    st.rpoints = init_params(ParamKind::reciprocal_points,
                             derive_seed(cfg.seed, 4), cfg.arch);
  }
  st.rng = Rng(derive_seed(cfg.seed, 5));
  st.opt_classifier = Adam({cfg.classifier_lr(), cfg.beta1, cfg.beta2, 1e-8});
  st.opt_rpoints = Adam({cfg.classifier_lr(), cfg.beta1, cfg.beta2, 1e-8});
  st.opt_generator = Adam({cfg.generator_lr(), cfg.beta1, cfg.beta2, 1e-8});
  st.opt_discriminator =
      Adam({cfg.discriminator_lr(), cfg.beta1, cfg.beta2, 1e-8});
  return st;
}

// Steps per epoch: enough batches to cover the largest training pool the
// model kind reads.
inline std::uint64_t steps_per_epoch(const OpenSetSplit& split,
                                     const TrainConfig& cfg) {
  const std::size_t n_lab = split.n_lab();
  std::size_t driver = n_lab;
  if (uses_generator(cfg.kind)) driver = std::max(driver, split.n_unlab());
  if (driver == 0) throw argument_error("steps_per_epoch: empty train pools");
  return (driver + static_cast<std::size_t>(cfg.batch_size) - 1) /
         static_cast<std::size_t>(cfg.batch_size);
}

namespace detail {

// Training pools copied out of the split once, respecting the access
// contract: baselines never touch the unlabelled pool.
struct TrainPools {
  Mat lab_x;
  std::vector<int> lab_y;
  Mat unlab_x;  // GAN kinds only
  Mat real_x;   // lab + unlab union (the discriminator's real pool)
};

inline TrainPools gather_pools(const OpenSetSplit& split,
                               const TrainConfig& cfg) {
  TrainPools p;
  p.lab_x = split.lab_samples();
  p.lab_y = split.lab_labels();
  if (uses_generator(cfg.kind)) {
    p.unlab_x = split.unlab_samples();
    p.real_x.resize(p.lab_x.rows() + p.unlab_x.rows(), p.lab_x.cols());
    p.real_x.topRows(p.lab_x.rows()) = p.lab_x;
    p.real_x.bottomRows(p.unlab_x.rows()) = p.unlab_x;
  }
  return p;
}

struct Snapshot {
  ParamSet classifier, generator, discriminator, rpoints;
  Adam opt_classifier, opt_generator, opt_discriminator, opt_rpoints;
  std::uint64_t step;
  Rng rng;
  std::vector<std::pair<std::string, std::vector<double>>> history;
};

inline Snapshot take_snapshot(const TrainState& st) {
  return {st.classifier,     st.generator,     st.discriminator,
          st.rpoints,        st.opt_classifier, st.opt_generator,
          st.opt_discriminator, st.opt_rpoints, st.step, st.rng,
          st.history};
}

inline void restore_snapshot(TrainState& st, const Snapshot& snap) {
  st.classifier = snap.classifier;
  st.generator = snap.generator;
  st.discriminator = snap.discriminator;
  st.rpoints = snap.rpoints;
  st.opt_classifier = snap.opt_classifier;
  st.opt_generator = snap.opt_generator;
  st.opt_discriminator = snap.opt_discriminator;
  st.opt_rpoints = snap.opt_rpoints;
  st.step = snap.step;
  st.rng = snap.rng;
  st.history = snap.history;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single optimizer sub-steps. Each updates exactly one player's parameters
// (the classifier step of ARP models also owns the reciprocal points and R)
// and returns the objective value it descended.
// ---------------------------------------------------------------------------

inline double step_softmax(TrainState& st, const Mat& x,
                           const std::vector<int>& y) {
  ad::Tape t;
  auto clf = lift_params(t, st.classifier, true);
  auto g = classifier_forward_graph(st.cfg.arch, clf, t.constant(x));
  auto loss =
      losses::nll_softmax_graph(g.logits, losses::detail::to_zero_based(y));
  t.backward(loss);
  st.opt_classifier.step(st.classifier, collect_grads(clf));
  const double v = loss.scalar();
  st.record("supervised", v);
  return v;
}

inline double step_arp_classifier(TrainState& st, const Mat& x,
                                  const std::vector<int>& y) {
  ad::Tape t;
  auto clf = lift_params(t, st.classifier, true);
  auto rp = lift_params(t, st.rpoints, true);
  auto g = classifier_forward_graph(st.cfg.arch, clf, t.constant(x));
  auto loss = losses::arp_classifier_graph(g.embedding, y, rp.at("P"),
                                           rp.at("R"), st.cfg.gamma);
  t.backward(loss.total);
  st.opt_classifier.step(st.classifier, collect_grads(clf));
  st.opt_rpoints.step(st.rpoints, collect_grads(rp));
  st.record("cross_entropy", loss.terms[0].second.scalar());
  st.record("hinge", loss.terms[1].second.scalar());
  const double v = loss.total.scalar();
  st.record("c_loss", v);
  return v;
}

// Eq. 2 descent on the discriminator/classifier. x_fake comes pre-generated
// so no gradient can reach the generator.
inline double step_fm_dc(TrainState& st, const Mat& x_fake, const Mat& x_real,
                         const Mat& x_lab, const std::vector<int>& y_lab) {
  ad::Tape t;
  auto clf = lift_params(t, st.classifier, true);
  auto g_fake = classifier_forward_graph(st.cfg.arch, clf, t.constant(x_fake));
  auto g_real = classifier_forward_graph(st.cfg.arch, clf, t.constant(x_real));
  auto g_lab = classifier_forward_graph(st.cfg.arch, clf, t.constant(x_lab));
  auto loss =
      losses::fm_dc_graph(g_fake.logits, g_real.logits, g_lab.logits, y_lab);
  t.backward(loss.total);
  st.opt_classifier.step(st.classifier, collect_grads(clf));
  st.record("fake", loss.terms[0].second.scalar());
  st.record("unlab_real", loss.terms[1].second.scalar());
  st.record("supervised", loss.terms[2].second.scalar());
  const double v = loss.total.scalar();
  st.record("dc_loss", v);
  return v;
}

// Eq. 3 descent on the generator; the classifier is lifted frozen, so
// gradients flow through it into the generator but never into its weights.
inline double step_fm_gen(TrainState& st, const Mat& feats_real,
                          const Mat& z) {
  ad::Tape t;
  auto gen = lift_params(t, st.generator, true);
  auto clf_frozen = lift_params(t, st.classifier, false);
  auto xf = generator_forward_graph(st.cfg.arch, gen, t.constant(z));
  auto feats_fake =
      classifier_forward_graph(st.cfg.arch, clf_frozen, xf).features;
  auto loss = losses::fm_gen_graph(t.constant(feats_real), feats_fake,
                                   st.cfg.fm_per_pair);
  t.backward(loss.total);
  st.opt_generator.step(st.generator, collect_grads(gen));
  const double v = loss.total.scalar();
  st.record("gen_loss", v);
  return v;
}

// Eq. 5 descent on the discriminator only.
inline double step_arp_gan_d(TrainState& st, const Mat& x_real,
                             const Mat& x_fake) {
  ad::Tape t;
  auto disc = lift_params(t, st.discriminator, true);
  auto d_real =
      discriminator_forward_graph(st.cfg.arch, disc, t.constant(x_real));
  auto d_fake =
      discriminator_forward_graph(st.cfg.arch, disc, t.constant(x_fake));
  auto loss = losses::arp_gan_d_graph(d_real, d_fake);
  t.backward(loss.total);
  st.opt_discriminator.step(st.discriminator, collect_grads(disc));
  st.record("d_real", loss.terms[0].second.scalar());
  st.record("d_fake", loss.terms[1].second.scalar());
  const double v = loss.total.scalar();
  st.record("d_loss", v);
  return v;
}

// Eq. 6 descent on the generator; discriminator, classifier and points are
// all frozen on the tape.
inline double step_arp_gan_g(TrainState& st, const Mat& z) {
  ad::Tape t;
  auto gen = lift_params(t, st.generator, true);
  auto disc_frozen = lift_params(t, st.discriminator, false);
  auto clf_frozen = lift_params(t, st.classifier, false);
  auto points = t.constant(st.rpoints.at("P"));
  auto xf = generator_forward_graph(st.cfg.arch, gen, t.constant(z));
  auto d_fake = discriminator_forward_graph(st.cfg.arch, disc_frozen, xf);
  auto emb = classifier_forward_graph(st.cfg.arch, clf_frozen, xf).embedding;
  auto loss =
      losses::arp_gan_g_graph(d_fake, emb, points, st.cfg.entropy_weight);
  t.backward(loss.total);
  st.opt_generator.step(st.generator, collect_grads(gen));
  st.record("g_adversarial", loss.terms[0].second.scalar());
  st.record("g_neg_entropy", loss.terms[1].second.scalar());
  const double v = loss.total.scalar();
  st.record("g_loss", v);
  return v;
}

// Eq. 7 descent on the classifier, points and R; x_fake comes pre-generated
// so no gradient can reach the generator.
inline double step_arp_gan_c(TrainState& st, const Mat& x_fake,
                             const Mat& x_lab, const std::vector<int>& y_lab) {
  ad::Tape t;
  auto clf = lift_params(t, st.classifier, true);
  auto rp = lift_params(t, st.rpoints, true);
  auto emb_fake =
      classifier_forward_graph(st.cfg.arch, clf, t.constant(x_fake));
  auto emb_lab = classifier_forward_graph(st.cfg.arch, clf, t.constant(x_lab));
  auto loss = losses::arp_gan_c_graph(emb_fake.embedding, emb_lab.embedding,
                                      y_lab, rp.at("P"), rp.at("R"),
                                      st.cfg.gamma, st.cfg.entropy_weight);
  t.backward(loss.total);
  st.opt_classifier.step(st.classifier, collect_grads(clf));
  st.opt_rpoints.step(st.rpoints, collect_grads(rp));
  st.record("c_neg_entropy", loss.terms[0].second.scalar());
  st.record("cross_entropy", loss.terms[1].second.scalar());
  st.record("hinge", loss.terms[2].second.scalar());
  const double v = loss.total.scalar();
  st.record("c_loss", v);
  return v;
}

// Advances the trainer by n_steps from wherever the state currently is.
// On divergence (non-finite or exploding loss) the state rolls back to the
// last good snapshot and `diverged` is set.
inline void train_steps(const OpenSetSplit& split, TrainState& st,
                        std::uint64_t n_steps) {
  const TrainConfig& cfg = st.cfg;
  cfg.validate();
  if (split.k() != cfg.arch.k) {
    throw argument_error("train: split K != architecture K");
  }
  if (split.n_lab() == 0) {
    throw argument_error("train: empty labelled pool");
  }

  detail::TrainPools pools = detail::gather_pools(split, cfg);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  BatchStream lab_stream(static_cast<std::size_t>(pools.lab_x.rows()), bs,
                         derive_seed(cfg.seed, 10));
  BatchStream unlab_stream(static_cast<std::size_t>(pools.unlab_x.rows()), bs,
                           derive_seed(cfg.seed, 11));
  BatchStream real_stream(static_cast<std::size_t>(pools.real_x.rows()), bs,
                          derive_seed(cfg.seed, 12));
  lab_stream.advance_to(st.step);
  unlab_stream.advance_to(st.step);
  real_stream.advance_to(st.step);

  const std::uint64_t snap_every =
      cfg.eval_every > 0 ? static_cast<std::uint64_t>(cfg.eval_every)
                         : steps_per_epoch(split, cfg);
  detail::Snapshot snapshot = detail::take_snapshot(st);

  auto divergent = [&](double v) {
    return !std::isfinite(v) || std::abs(v) > cfg.divergence_threshold;
  };

  for (std::uint64_t s = 0; s < n_steps; ++s) {
    double worst = 0.0;
    try {
      switch (cfg.kind) {
        case ModelKind::softmax: {
          auto idx = lab_stream.next();
          worst = step_softmax(st, detail::take_rows(pools.lab_x, idx),
                               detail::take(pools.lab_y, idx));
          break;
        }
        case ModelKind::arp: {
          auto idx = lab_stream.next();
          worst = step_arp_classifier(st, detail::take_rows(pools.lab_x, idx),
                                      detail::take(pools.lab_y, idx));
          break;
        }
        case ModelKind::fm_gan: {
          // Discriminator/classifier step (Eq. 2).
          auto lab_idx = lab_stream.next();
          Mat x_lab = detail::take_rows(pools.lab_x, lab_idx);
          auto y_lab = detail::take(pools.lab_y, lab_idx);
          Mat x_real;
          if (cfg.fold_labelled_into_real) {
            x_real = detail::take_rows(pools.real_x, real_stream.next());
          } else {
            x_real = detail::take_rows(pools.unlab_x, unlab_stream.next());
          }
          Mat z = sample_noise(st.rng, cfg.batch_size, cfg.arch.noise_dim);
          Mat x_fake = generator_forward(cfg.arch, st.generator, z);
          const double dc_v = step_fm_dc(st, x_fake, x_real, x_lab, y_lab);

          // Generator step (Eq. 3): features of a fresh real batch, matched
          // by a fresh noise batch.
          Mat x_feat = detail::take_rows(
              pools.real_x.rows() > 0 ? pools.real_x : pools.lab_x,
              real_stream.next());
          Mat feats_real =
              classifier_forward(cfg.arch, st.classifier, x_feat).features;
          const Eigen::Index zb =
              cfg.fm_per_pair ? feats_real.rows() : cfg.batch_size;
          Mat z2 = sample_noise(st.rng, zb, cfg.arch.noise_dim);
          const double g_v = step_fm_gen(st, feats_real, z2);
          worst = std::max(std::abs(dc_v), std::abs(g_v));
          break;
        }
        case ModelKind::arp_gan: {
          // Discriminator step (Eq. 5); real pool is lab + unlab.
          Mat x_real = detail::take_rows(pools.real_x, real_stream.next());
          Mat z = sample_noise(st.rng, cfg.batch_size, cfg.arch.noise_dim);
          const double d_v = step_arp_gan_d(
              st, x_real, generator_forward(cfg.arch, st.generator, z));

          // Generator step (Eq. 6).
          Mat z2 = sample_noise(st.rng, cfg.batch_size, cfg.arch.noise_dim);
          const double g_v = step_arp_gan_g(st, z2);

          // Classifier step (Eq. 7), on fresh generator noise by default.
          Mat x_fake3;
          if (cfg.fresh_noise_for_classifier) {
            Mat z3 = sample_noise(st.rng, cfg.batch_size, cfg.arch.noise_dim);
            x_fake3 = generator_forward(cfg.arch, st.generator, z3);
          } else {
            x_fake3 = generator_forward(cfg.arch, st.generator, z2);
          }
          auto lab_idx = lab_stream.next();
          const double c_v = step_arp_gan_c(
              st, x_fake3, detail::take_rows(pools.lab_x, lab_idx),
              detail::take(pools.lab_y, lab_idx));
          worst = std::max({std::abs(d_v), std::abs(g_v), std::abs(c_v)});
          break;
        }
      }
    } catch (const numeric_error&) {
      detail::restore_snapshot(st, snapshot);
      st.diverged = true;
      return;
    }

    if (divergent(worst)) {
      detail::restore_snapshot(st, snapshot);
      st.diverged = true;
      return;
    }
    ++st.step;
    if (st.step % snap_every == 0) snapshot = detail::take_snapshot(st);
  }
}

inline TrainState train(const OpenSetSplit& split, const TrainConfig& cfg) {
  TrainState st = init_train_state(cfg);
  const std::uint64_t total =
      static_cast<std::uint64_t>(cfg.epochs) * steps_per_epoch(split, cfg);
  train_steps(split, st, total);
  return st;
}

inline TrainState train_softmax_baseline(const OpenSetSplit& split,
                                         TrainConfig cfg) {
  cfg.kind = ModelKind::softmax;
  return train(split, cfg);
}

inline TrainState train_arp_baseline(const OpenSetSplit& split,
                                     TrainConfig cfg) {
  cfg.kind = ModelKind::arp;
  return train(split, cfg);
}

inline TrainState train_fm_gan(const OpenSetSplit& split, TrainConfig cfg) {
  cfg.kind = ModelKind::fm_gan;
  return train(split, cfg);
}

inline TrainState train_arp_gan(const OpenSetSplit& split, TrainConfig cfg) {
  cfg.kind = ModelKind::arp_gan;
  return train(split, cfg);
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

inline void save_checkpoint(const TrainState& st, const std::string& path) {
  ArrayStore store;
  store.meta["kind"] = "checkpoint";
  store.meta["model_kind"] = to_string(st.cfg.kind);
  store.meta["step"] = st.step;
  store.meta["diverged"] = st.diverged;
  store.meta["rng"] = st.rng.serialize();
  store.meta["train_config"] = to_json(st.cfg);
  store.meta["opt_t"] = {{"classifier", st.opt_classifier.t()},
                         {"generator", st.opt_generator.t()},
                         {"discriminator", st.opt_discriminator.t()},
                         {"rpoints", st.opt_rpoints.t()}};
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& [name, series] : st.history) hist.push_back(name);
  store.meta["history_terms"] = hist;

  auto add_set = [&](const std::string& prefix, const ParamSet& p) {
    for (const auto& [n, m] : p.arrays) {
      store.arrays.emplace_back(prefix + "/" + n, m);
    }
  };
  auto add_opt = [&](const std::string& prefix, const Adam& opt) {
    for (const auto& [n, m] : opt.state_arrays()) {
      store.arrays.emplace_back(prefix + "/" + n, m);
    }
  };
  add_set("classifier", st.classifier);
  add_opt("opt_classifier", st.opt_classifier);
  if (uses_generator(st.cfg.kind)) {
    add_set("generator", st.generator);
    add_opt("opt_generator", st.opt_generator);
  }
  if (uses_discriminator(st.cfg.kind)) {
    add_set("discriminator", st.discriminator);
    add_opt("opt_discriminator", st.opt_discriminator);
  }
  if (uses_reciprocal_points(st.cfg.kind)) {
    add_set("rpoints", st.rpoints);
    add_opt("opt_rpoints", st.opt_rpoints);
  }
  for (const auto& [name, series] : st.history) {
    Mat m(static_cast<Eigen::Index>(series.size()), 1);
    for (std::size_t i = 0; i < series.size(); ++i) {
      m(static_cast<Eigen::Index>(i), 0) = series[i];
    }
    store.arrays.emplace_back("history/" + name, std::move(m));
  }
  save_array_store(path, std::move(store));
}

// Restores a checkpoint. When `expect_arch` is given, the stored
// architecture must match it exactly.
inline TrainState load_checkpoint(const std::string& path,
                                  const ArchConfig* expect_arch = nullptr) {
  ArrayStore store = load_array_store(path);
  if (!store.meta.contains("kind") || store.meta["kind"] != "checkpoint") {
    throw integrity_error(path + ": not a checkpoint file");
  }
  TrainState st;
  st.cfg = train_config_from_json(store.meta.at("train_config"));
  if (expect_arch && to_json(st.cfg.arch) != to_json(*expect_arch)) {
    throw integrity_error(path +
                          ": checkpoint architecture does not match the "
                          "requested configuration");
  }
  st.step = store.meta.at("step");
  st.diverged = store.meta.at("diverged");
  st.rng.deserialize(store.meta.at("rng"));

  auto read_set = [&](const std::string& prefix, ParamKind kind) {
    ParamSet p;
    p.kind = to_string(kind);
    for (const auto& [n, m] : store.arrays) {
      if (n.rfind(prefix + "/", 0) == 0 &&
          n.rfind(prefix + "/m/", 0) != 0) {  // optimizer names have m/ v/
        p.arrays.emplace_back(n.substr(prefix.size() + 1), m);
      }
    }
    return p;
  };
  auto read_opt = [&](const std::string& prefix, Adam& opt, AdamConfig cfg,
                      long t) {
    std::vector<std::pair<std::string, Mat>> arrays;
    for (const auto& [n, m] : store.arrays) {
      if (n.rfind(prefix + "/", 0) == 0) {
        arrays.emplace_back(n.substr(prefix.size() + 1), m);
      }
    }
    opt = Adam(cfg);
    opt.restore_state(t, arrays);
  };

  const auto& cfg = st.cfg;
  const auto& opt_t = store.meta.at("opt_t");
  st.classifier = read_set("classifier",
                           cfg.arch.mode == ClassifierMode::fm
                               ? ParamKind::classifier_fm
                               : ParamKind::classifier_arp);
  read_opt("opt_classifier", st.opt_classifier,
           {cfg.classifier_lr(), cfg.beta1, cfg.beta2, 1e-8},
           opt_t.at("classifier"));
  if (uses_generator(cfg.kind)) {
    st.generator = read_set("generator", ParamKind::generator);
    read_opt("opt_generator", st.opt_generator,
             {cfg.generator_lr(), cfg.beta1, cfg.beta2, 1e-8},
             opt_t.at("generator"));
  }
  if (uses_discriminator(cfg.kind)) {
    st.discriminator = read_set("discriminator", ParamKind::discriminator);
    read_opt("opt_discriminator", st.opt_discriminator,
             {cfg.discriminator_lr(), cfg.beta1, cfg.beta2, 1e-8},
             opt_t.at("discriminator"));
  }
  if (uses_reciprocal_points(cfg.kind)) {
    st.rpoints = read_set("rpoints", ParamKind::reciprocal_points);
    read_opt("opt_rpoints", st.opt_rpoints,
             {cfg.classifier_lr(), cfg.beta1, cfg.beta2, 1e-8},
             opt_t.at("rpoints"));
  }
  for (const auto& name : store.meta.at("history_terms")) {
    const Mat& m = store.at("history/" + name.get<std::string>());
    std::vector<double> series(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) series[i] = m(i, 0);
    st.history.emplace_back(name.get<std::string>(), std::move(series));
  }
  return st;
}

}  // namespace sslosr
