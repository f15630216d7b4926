#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sslosr/ad.hpp"
#include "sslosr/error.hpp"
#include "sslosr/rng.hpp"

namespace sslosr {

using Mat = Eigen::MatrixXd;

enum class Activation { identity, tanh, sigmoid, relu, lrelu };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::lrelu: return "lrelu";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  if (s == "lrelu") return Activation::lrelu;
  throw argument_error("unknown activation: " + s);
}

inline ad::Value apply_activation(ad::Value v, Activation a) {
  switch (a) {
    case Activation::identity: return v;
    case Activation::tanh: return ad::tanh(v);
    case Activation::sigmoid: return ad::sigmoid(v);
    case Activation::relu: return ad::relu(v);
    case Activation::lrelu: return ad::leaky_relu(v, 0.2);
  }
  throw argument_error("unknown activation");
}

// ---------------------------------------------------------------------------
// Layer specs
// ---------------------------------------------------------------------------

struct DenseLayer {
  int in = 0, out = 0;
  Activation act = Activation::identity;
};

struct ConvLayer {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, k = 3, stride = 1, pad = 1;
  Activation act = Activation::identity;

  ad::Conv2dGeom geom() const {
    return ad::Conv2dGeom{in_c, in_h, in_w, out_c, k, stride, pad};
  }
};

struct UpsampleLayer {
  int c = 0, h = 0, w = 0;  // input geometry; output doubles h and w
};

using Layer = std::variant<DenseLayer, ConvLayer, UpsampleLayer>;

struct NetSpec {
  std::vector<Layer> layers;

  int input_dim() const {
    if (layers.empty()) throw argument_error("NetSpec: no layers");
    if (auto* d = std::get_if<DenseLayer>(&layers.front())) return d->in;
    if (auto* c = std::get_if<ConvLayer>(&layers.front())) {
      return c->in_c * c->in_h * c->in_w;
    }
    const auto& u = std::get<UpsampleLayer>(layers.front());
    return u.c * u.h * u.w;
  }

  int output_dim() const {
    if (layers.empty()) throw argument_error("NetSpec: no layers");
    if (auto* d = std::get_if<DenseLayer>(&layers.back())) return d->out;
    if (auto* c = std::get_if<ConvLayer>(&layers.back())) {
      auto g = c->geom();
      return c->out_c * g.out_h() * g.out_w();
    }
    const auto& u = std::get<UpsampleLayer>(layers.back());
    return u.c * 2 * u.h * 2 * u.w;
  }
};

inline nlohmann::json to_json(const NetSpec& spec) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& layer : spec.layers) {
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      out.push_back({{"type", "dense"},
                     {"in", d->in},
                     {"out", d->out},
                     {"act", to_string(d->act)}});
    } else if (auto* c = std::get_if<ConvLayer>(&layer)) {
      out.push_back({{"type", "conv"},
                     {"in_c", c->in_c},
                     {"in_h", c->in_h},
                     {"in_w", c->in_w},
                     {"out_c", c->out_c},
                     {"k", c->k},
                     {"stride", c->stride},
                     {"pad", c->pad},
                     {"act", to_string(c->act)}});
    } else {
      const auto& u = std::get<UpsampleLayer>(layer);
      out.push_back(
          {{"type", "upsample2"}, {"c", u.c}, {"h", u.h}, {"w", u.w}});
    }
  }
  return out;
}

inline NetSpec net_spec_from_json(const nlohmann::json& j) {
  NetSpec spec;
  for (const auto& l : j) {
    const std::string type = l.at("type");
    if (type == "dense") {
      spec.layers.push_back(DenseLayer{
          l.at("in"), l.at("out"), activation_from_string(l.at("act"))});
    } else if (type == "conv") {
      spec.layers.push_back(ConvLayer{
          l.at("in_c"), l.at("in_h"), l.at("in_w"), l.at("out_c"), l.at("k"),
          l.at("stride"), l.at("pad"), activation_from_string(l.at("act"))});
    } else if (type == "upsample2") {
      spec.layers.push_back(UpsampleLayer{l.at("c"), l.at("h"), l.at("w")});
    } else {
      throw format_error("unknown layer type: " + type);
    }
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Architecture configuration
// ---------------------------------------------------------------------------

enum class ClassifierMode { fm, arp };

inline std::string to_string(ClassifierMode m) {
  return m == ClassifierMode::fm ? "fm" : "arp";
}

struct ArchConfig {
  std::vector<std::size_t> input_shape;  // per-sample shape
  int k = 0;                             // labelled categories
  ClassifierMode mode = ClassifierMode::fm;
  int embedding_dim = 0;  // m; reciprocal-point width (arp mode)
  int noise_dim = 8;
  NetSpec classifier, generator, discriminator;

  int input_dim() const {
    int d = 1;
    for (auto s : input_shape) d *= static_cast<int>(s);
    return d;
  }

  // Width of the classifier's penultimate activations C'(x) (fm mode).
  int feature_dim() const {
    if (classifier.layers.size() < 2) {
      throw argument_error("ArchConfig: classifier needs >= 2 layers");
    }
    const auto& last = classifier.layers.back();
    if (!std::holds_alternative<DenseLayer>(last)) {
      throw argument_error("ArchConfig: classifier must end in a dense layer");
    }
    return std::get<DenseLayer>(last).in;
  }

  void validate() const {
    if (k < 2) throw argument_error("ArchConfig: K must be >= 2");
    if (noise_dim < 1) throw argument_error("ArchConfig: noise_dim >= 1");
    if (classifier.input_dim() != input_dim()) {
      throw argument_error("ArchConfig: classifier input width mismatch");
    }
    if (discriminator.input_dim() != input_dim()) {
      throw argument_error("ArchConfig: discriminator input width mismatch");
    }
    if (generator.input_dim() != noise_dim) {
      throw argument_error("ArchConfig: generator input width mismatch");
    }
    if (generator.output_dim() != input_dim()) {
      throw argument_error("ArchConfig: generator output width mismatch");
    }
    const auto& last = classifier.layers.back();
    if (!std::holds_alternative<DenseLayer>(last) ||
        std::get<DenseLayer>(last).act != Activation::identity) {
      throw argument_error(
          "ArchConfig: classifier must end in a linear dense layer");
    }
    const int out = classifier.output_dim();
    if (mode == ClassifierMode::fm && out != k) {
      throw argument_error("ArchConfig: fm classifier must output K logits");
    }
    if (mode == ClassifierMode::arp && out != embedding_dim) {
      throw argument_error(
          "ArchConfig: arp classifier output width must equal embedding_dim");
    }
  }
};

inline nlohmann::json to_json(const ArchConfig& a) {
  return {{"input_shape", a.input_shape},
          {"k", a.k},
          {"mode", to_string(a.mode)},
          {"embedding_dim", a.embedding_dim},
          {"noise_dim", a.noise_dim},
          {"classifier", to_json(a.classifier)},
          {"generator", to_json(a.generator)},
          {"discriminator", to_json(a.discriminator)}};
}

inline ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.input_shape = j.at("input_shape").get<std::vector<std::size_t>>();
  a.k = j.at("k");
  a.mode = j.at("mode") == "fm" ? ClassifierMode::fm : ClassifierMode::arp;
  a.embedding_dim = j.at("embedding_dim");
  a.noise_dim = j.at("noise_dim");
  a.classifier = net_spec_from_json(j.at("classifier"));
  a.generator = net_spec_from_json(j.at("generator"));
  a.discriminator = net_spec_from_json(j.at("discriminator"));
  return a;
}

// Desk-scale defaults: fully connected nets for low-dimensional domains,
// small conv stacks for image shapes. Sized to train in minutes on a CPU.
inline ArchConfig make_default_arch(const std::vector<std::size_t>& input_shape,
                                    int k, ClassifierMode mode,
                                    int hidden = 64) {
  ArchConfig a;
  a.input_shape = input_shape;
  a.k = k;
  a.mode = mode;

  const bool image = input_shape.size() == 3;
  a.embedding_dim = image ? 128 : 8;
  a.noise_dim = image ? 64 : 8;
  const int in = a.input_dim();
  const int clf_out = mode == ClassifierMode::fm ? k : a.embedding_dim;

  if (!image) {
    a.classifier.layers = {DenseLayer{in, hidden, Activation::tanh},
                           DenseLayer{hidden, hidden, Activation::tanh},
                           DenseLayer{hidden, clf_out, Activation::identity}};
    a.generator.layers = {DenseLayer{a.noise_dim, hidden, Activation::tanh},
                          DenseLayer{hidden, hidden, Activation::tanh},
                          DenseLayer{hidden, in, Activation::tanh}};
    a.discriminator.layers = {DenseLayer{in, hidden, Activation::tanh},
                              DenseLayer{hidden, 1, Activation::sigmoid}};
    return a;
  }

  const int c = static_cast<int>(input_shape[0]);
  const int h = static_cast<int>(input_shape[1]);
  const int w = static_cast<int>(input_shape[2]);
  auto down = [](int x) { return (x + 2 - 3) / 2 + 1; };  // k3 s2 p1
  const int h2 = down(h), w2 = down(w);
  const int h4 = down(h2), w4 = down(w2);
  const int h8 = down(h4), w8 = down(w4);

  a.classifier.layers = {
      ConvLayer{c, h, w, 32, 3, 2, 1, Activation::lrelu},
      ConvLayer{32, h2, w2, 64, 3, 2, 1, Activation::lrelu},
      ConvLayer{64, h4, w4, 128, 3, 2, 1, Activation::lrelu},
      ConvLayer{128, h8, w8, 128, 3, 1, 1, Activation::lrelu},
      DenseLayer{128 * h8 * w8, clf_out, Activation::identity}};

  // Dense projection to a quarter-resolution map, then two upsample+conv
  // stages back to full resolution.
  const int gh = (h + 3) / 4, gw = (w + 3) / 4;
  a.generator.layers = {
      DenseLayer{a.noise_dim, 128 * gh * gw, Activation::lrelu},
      UpsampleLayer{128, gh, gw},
      ConvLayer{128, 2 * gh, 2 * gw, 64, 3, 1, 1, Activation::lrelu},
      UpsampleLayer{64, 2 * gh, 2 * gw},
      ConvLayer{64, 4 * gh, 4 * gw, c, 3, 1, 1, Activation::tanh}};

  a.discriminator.layers = {
      ConvLayer{c, h, w, 32, 3, 2, 1, Activation::lrelu},
      ConvLayer{32, h2, w2, 64, 3, 2, 1, Activation::lrelu},
      ConvLayer{64, h4, w4, 128, 3, 2, 1, Activation::lrelu},
      DenseLayer{128 * h8 * w8, 1, Activation::sigmoid}};
  return a;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

enum class ParamKind {
  classifier_fm,
  classifier_arp,
  generator,
  discriminator,
  reciprocal_points
};

inline std::string to_string(ParamKind k) {
  switch (k) {
    case ParamKind::classifier_fm: return "classifier-fm";
    case ParamKind::classifier_arp: return "classifier-arp";
    case ParamKind::generator: return "generator";
    case ParamKind::discriminator: return "discriminator";
    case ParamKind::reciprocal_points: return "reciprocal-points";
  }
  return "?";
}

inline ParamKind param_kind_from_string(const std::string& s) {
  if (s == "classifier-fm") return ParamKind::classifier_fm;
  if (s == "classifier-arp") return ParamKind::classifier_arp;
  if (s == "generator") return ParamKind::generator;
  if (s == "discriminator") return ParamKind::discriminator;
  if (s == "reciprocal-points") return ParamKind::reciprocal_points;
  throw argument_error("unknown param kind: " + s);
}

// Named arrays with a fixed order; shapes are fixed after initialization.
struct ParamSet {
  std::string kind;
  std::vector<std::pair<std::string, Mat>> arrays;

  Mat& at(const std::string& name) {
    for (auto& [n, m] : arrays) {
      if (n == name) return m;
    }
    throw argument_error("ParamSet " + kind + ": no array " + name);
  }
  const Mat& at(const std::string& name) const {
    for (const auto& [n, m] : arrays) {
      if (n == name) return m;
    }
    throw argument_error("ParamSet " + kind + ": no array " + name);
  }
  bool empty() const { return arrays.empty(); }
};

namespace detail {

inline Mat gaussian_matrix(Rng& rng, Eigen::Index r, Eigen::Index c,
                           double stddev) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = stddev * rng.normal();
  }
  return m;
}

inline void init_net_params(ParamSet& p, const NetSpec& spec, Rng& rng) {
  int li = 0;
  for (const auto& layer : spec.layers) {
    const std::string suffix = std::to_string(li);
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      p.arrays.emplace_back(
          "W" + suffix,
          gaussian_matrix(rng, d->in, d->out, 1.0 / std::sqrt(double(d->in))));
      p.arrays.emplace_back("b" + suffix, Mat::Zero(1, d->out));
    } else if (auto* c = std::get_if<ConvLayer>(&layer)) {
      const int fan_in = c->in_c * c->k * c->k;
      p.arrays.emplace_back(
          "W" + suffix,
          gaussian_matrix(rng, c->out_c, fan_in,
                          1.0 / std::sqrt(double(fan_in))));
      p.arrays.emplace_back("b" + suffix, Mat::Zero(1, c->out_c));
    }
    ++li;
  }
}

}  // namespace detail

// Deterministic under seed. Reciprocal points are standard normal; the
// learned ranges R start at 0.
inline ParamSet init_params(ParamKind kind, std::uint64_t seed,
                            const ArchConfig& arch) {
  arch.validate();
  Rng rng(seed);
  ParamSet p;
  p.kind = to_string(kind);
  switch (kind) {
    case ParamKind::classifier_fm:
    case ParamKind::classifier_arp:
      detail::init_net_params(p, arch.classifier, rng);
      break;
    case ParamKind::generator:
      detail::init_net_params(p, arch.generator, rng);
      break;
    case ParamKind::discriminator:
      detail::init_net_params(p, arch.discriminator, rng);
      break;
    case ParamKind::reciprocal_points:
      p.arrays.emplace_back(
          "P", detail::gaussian_matrix(rng, arch.k, arch.embedding_dim, 1.0));
      p.arrays.emplace_back("R", Mat::Zero(arch.k, 1));
      break;
  }
  return p;
}

// Learnable prototypes of "everything category j is not", one per category,
// plus per-category range bounds and the hinge weight.
struct ReciprocalPointSet {
  Mat points;             // K x m
  Eigen::VectorXd range;  // K
  double gamma = 0.1;

  int k() const { return static_cast<int>(points.rows()); }
  int m() const { return static_cast<int>(points.cols()); }

  static ReciprocalPointSet from_params(const ParamSet& p, double gamma) {
    ReciprocalPointSet rp;
    rp.points = p.at("P");
    rp.range = p.at("R").col(0);
    rp.gamma = gamma;
    return rp;
  }
};

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

// Parameters lifted onto a tape. Trainable params become leaves (gradients
// accumulate); frozen params become constants (gradients still flow through
// them to earlier nodes, but are not collected).
struct ParamRefs {
  std::vector<std::pair<std::string, ad::Value>> vals;

  ad::Value at(const std::string& name) const {
    for (const auto& [n, v] : vals) {
      if (n == name) return v;
    }
    throw argument_error("ParamRefs: no array " + name);
  }
};

inline ParamRefs lift_params(ad::Tape& tape, const ParamSet& p,
                             bool trainable) {
  ParamRefs refs;
  for (const auto& [name, m] : p.arrays) {
    refs.vals.emplace_back(name,
                           trainable ? tape.leaf(m) : tape.constant(m));
  }
  return refs;
}

namespace detail {

struct NetTrace {
  ad::Value output;
  ad::Value penultimate;  // input to the final layer
};

inline NetTrace run_net(const NetSpec& spec, const ParamRefs& params,
                        ad::Value x) {
  if (x.cols() != spec.input_dim()) {
    throw argument_error("net forward: input width " +
                         std::to_string(x.cols()) + " != expected " +
                         std::to_string(spec.input_dim()));
  }
  NetTrace trace;
  ad::Value h = x;
  int li = 0;
  for (const auto& layer : spec.layers) {
    const std::string suffix = std::to_string(li);
    if (li + 1 == static_cast<int>(spec.layers.size())) trace.penultimate = h;
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      h = apply_activation(
          ad::add(ad::matmul(h, params.at("W" + suffix)),
                  params.at("b" + suffix)),
          d->act);
    } else if (auto* c = std::get_if<ConvLayer>(&layer)) {
      h = apply_activation(ad::conv2d(h, params.at("W" + suffix),
                                      params.at("b" + suffix), c->geom()),
                           c->act);
    } else {
      const auto& u = std::get<UpsampleLayer>(layer);
      h = ad::upsample2_nn(h, u.c, u.h, u.w);
    }
    ++li;
  }
  trace.output = h;
  return trace;
}

}  // namespace detail

// Graph-building forwards (for training); use the plain overloads below for
// evaluation.
struct ClassifierGraph {
  ad::Value logits;     // fm mode, B x K
  ad::Value features;   // fm mode, B x F (penultimate activations C'(x))
  ad::Value embedding;  // arp mode, B x m (C(x))
};

inline ClassifierGraph classifier_forward_graph(const ArchConfig& arch,
                                                const ParamRefs& params,
                                                ad::Value x) {
  auto trace = detail::run_net(arch.classifier, params, x);
  ClassifierGraph g;
  if (arch.mode == ClassifierMode::fm) {
    g.logits = trace.output;
    g.features = trace.penultimate;
  } else {
    g.embedding = trace.output;
  }
  return g;
}

inline ad::Value generator_forward_graph(const ArchConfig& arch,
                                         const ParamRefs& params,
                                         ad::Value z) {
  return detail::run_net(arch.generator, params, z).output;
}

// Output strictly inside (0, 1): sigmoid clamped away from the endpoints.
inline constexpr double kProbEps = 1e-7;

inline ad::Value discriminator_forward_graph(const ArchConfig& arch,
                                             const ParamRefs& params,
                                             ad::Value x) {
  auto out = detail::run_net(arch.discriminator, params, x).output;
  return ad::clamp(out, kProbEps, 1.0 - kProbEps);
}

// Plain (evaluation-mode) forwards.
struct ClassifierReadout {
  Mat logits;
  Mat features;
  Mat embedding;
};

inline ClassifierReadout classifier_forward(const ArchConfig& arch,
                                            const ParamSet& params,
                                            const Mat& x) {
  ad::Tape tape;
  auto refs = lift_params(tape, params, false);
  auto g = classifier_forward_graph(arch, refs, tape.constant(x));
  ClassifierReadout out;
  if (arch.mode == ClassifierMode::fm) {
    out.logits = g.logits.val();
    out.features = g.features.val();
  } else {
    out.embedding = g.embedding.val();
  }
  return out;
}

inline Mat generator_forward(const ArchConfig& arch, const ParamSet& params,
                             const Mat& z) {
  ad::Tape tape;
  auto refs = lift_params(tape, params, false);
  return generator_forward_graph(arch, refs, tape.constant(z)).val();
}

inline Eigen::VectorXd discriminator_forward(const ArchConfig& arch,
                                             const ParamSet& params,
                                             const Mat& x) {
  ad::Tape tape;
  auto refs = lift_params(tape, params, false);
  return discriminator_forward_graph(arch, refs, tape.constant(x)).val().col(0);
}

// Standard-normal noise batch for the generator.
inline Mat sample_noise(Rng& rng, Eigen::Index batch, int noise_dim) {
  Mat z(batch, noise_dim);
  for (Eigen::Index i = 0; i < batch; ++i) {
    for (int j = 0; j < noise_dim; ++j) z(i, j) = rng.normal();
  }
  return z;
}

}  // namespace sslosr
