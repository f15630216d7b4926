#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sslosr/error.hpp"

// Reverse-mode automatic differentiation on a tape of Eigen matrices.
// A Tape owns the nodes; Value is a cheap handle. Build the forward graph,
// call Tape::backward on a 1x1 root, then read gradients off the leaves.
// Convention: batches are row-major, shape (batch, features).
namespace sslosr::ad {

using Mat = Eigen::MatrixXd;

class Tape;

struct Value {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Mat& val() const;
  const Mat& grad() const;
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  double scalar() const;
};

class Tape {
 public:
  struct Node {
    Mat value;
    Mat grad;
    bool is_leaf = false;
    std::function<void(Tape&)> back;  // accumulates into parent grads
  };

  Value leaf(Mat v) { return push(std::move(v), true); }
  Value constant(Mat v) { return push(std::move(v), false); }
  Value scalar(double v) { return constant(Mat::Constant(1, 1, v)); }

  Value push(Mat v, bool is_leaf) {
    Node n;
    n.value = std::move(v);
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.is_leaf = is_leaf;
    nodes_.push_back(std::move(n));
    return Value{this, nodes_.size() - 1};
  }

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds the root with d(root)/d(root) = 1 and sweeps the tape in reverse
  // creation order. The root must be a 1x1 scalar.
  void backward(Value root) {
    if (root.tape != this) throw argument_error("backward: foreign value");
    Node& r = nodes_[root.id];
    if (r.value.rows() != 1 || r.value.cols() != 1) {
      throw argument_error("backward: root must be a 1x1 scalar");
    }
    r.grad(0, 0) += 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      if (nodes_[i].back) nodes_[i].back(*this);
    }
  }

  void clear_grads() {
    for (Node& n : nodes_) n.grad.setZero();
  }

 private:
  std::vector<Node> nodes_;
};

inline const Mat& Value::val() const { return tape->node(id).value; }
inline const Mat& Value::grad() const { return tape->node(id).grad; }
inline Eigen::Index Value::rows() const { return val().rows(); }
inline Eigen::Index Value::cols() const { return val().cols(); }
inline double Value::scalar() const {
  if (rows() != 1 || cols() != 1) {
    throw argument_error("Value::scalar: not a 1x1 value");
  }
  return val()(0, 0);
}

namespace detail {

// Numpy-style broadcast: each dimension must match or be 1 on one side.
inline std::pair<Eigen::Index, Eigen::Index> broadcast_shape(const Mat& a,
                                                             const Mat& b) {
  auto dim = [&](Eigen::Index x, Eigen::Index y, const char* what) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw argument_error("broadcast: incompatible " + std::string(what) +
                         " for shapes (" + std::to_string(a.rows()) + "," +
                         std::to_string(a.cols()) + ") and (" +
                         std::to_string(b.rows()) + "," +
                         std::to_string(b.cols()) + ")");
  };
  return {dim(a.rows(), b.rows(), "rows"), dim(a.cols(), b.cols(), "cols")};
}

inline Mat expand(const Mat& a, Eigen::Index r, Eigen::Index c) {
  if (a.rows() == r && a.cols() == c) return a;
  return a.replicate(a.rows() == r ? 1 : r, a.cols() == c ? 1 : c);
}

// Sums g over any dimension that was expanded away from shape (r, c).
inline Mat reduce_to(const Mat& g, Eigen::Index r, Eigen::Index c) {
  Mat out = g;
  if (r == 1 && out.rows() > 1) out = out.colwise().sum().eval();
  if (c == 1 && out.cols() > 1) out = out.rowwise().sum().eval();
  return out;
}

inline Tape& same_tape(Value a, Value b) {
  if (a.tape != b.tape) throw argument_error("op: values from different tapes");
  return *a.tape;
}

// Creates the result node and wires a backward closure that can read its own
// incoming gradient via the captured id.
template <typename Back>
Value make_node(Tape& t, Mat out, Back&& back_of_self) {
  Value v = t.push(std::move(out), false);
  std::size_t self = v.id;
  t.node(self).back = [self, back = std::forward<Back>(back_of_self)](
                          Tape& tp) { back(tp, tp.node(self).grad); };
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binary ops with broadcasting
// ---------------------------------------------------------------------------

inline Value add(Value a, Value b) {
  Tape& t = detail::same_tape(a, b);
  auto [r, c] = detail::broadcast_shape(a.val(), b.val());
  Mat out = detail::expand(a.val(), r, c) + detail::expand(b.val(), r, c);
  auto ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  std::size_t ai = a.id, bi = b.id;
  return detail::make_node(t, std::move(out), [=](Tape& tp, const Mat& g) {
    tp.node(ai).grad += detail::reduce_to(g, ar, ac);
    tp.node(bi).grad += detail::reduce_to(g, br, bc);
  });
}

inline Value sub(Value a, Value b) {
  Tape& t = detail::same_tape(a, b);
  auto [r, c] = detail::broadcast_shape(a.val(), b.val());
  Mat out = detail::expand(a.val(), r, c) - detail::expand(b.val(), r, c);
  auto ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  std::size_t ai = a.id, bi = b.id;
  return detail::make_node(t, std::move(out), [=](Tape& tp, const Mat& g) {
    tp.node(ai).grad += detail::reduce_to(g, ar, ac);
    tp.node(bi).grad -= detail::reduce_to(g, br, bc);
  });
}

// Elementwise product.
inline Value mul(Value a, Value b) {
  Tape& t = detail::same_tape(a, b);
  auto [r, c] = detail::broadcast_shape(a.val(), b.val());
  Mat ea = detail::expand(a.val(), r, c);
  Mat eb = detail::expand(b.val(), r, c);
  Mat out = ea.cwiseProduct(eb);
  auto ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  std::size_t ai = a.id, bi = b.id;
  return detail::make_node(
      t, std::move(out),
      [=, ea = std::move(ea), eb = std::move(eb)](Tape& tp, const Mat& g) {
        tp.node(ai).grad += detail::reduce_to(g.cwiseProduct(eb), ar, ac);
        tp.node(bi).grad += detail::reduce_to(g.cwiseProduct(ea), br, bc);
      });
}

inline Value matmul(Value a, Value b) {
  Tape& t = detail::same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw argument_error("matmul: inner dimensions disagree");
  }
  Mat out = a.val() * b.val();
  std::size_t ai = a.id, bi = b.id;
  return detail::make_node(t, std::move(out), [=](Tape& tp, const Mat& g) {
    tp.node(ai).grad += g * tp.node(bi).value.transpose();
    tp.node(bi).grad += tp.node(ai).value.transpose() * g;
  });
}

// ---------------------------------------------------------------------------
// Unary ops
// ---------------------------------------------------------------------------

inline Value scale(Value a, double s) {
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, Mat(a.val() * s),
                           [=](Tape& tp, const Mat& g) {
                             tp.node(ai).grad += g * s;
                           });
}

inline Value neg(Value a) { return scale(a, -1.0); }

inline Value add_scalar(Value a, double c) {
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, Mat(a.val().array() + c),
                           [=](Tape& tp, const Mat& g) {
                             tp.node(ai).grad += g;
                           });
}

inline Value transpose(Value a) {
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, Mat(a.val().transpose()),
                           [=](Tape& tp, const Mat& g) {
                             tp.node(ai).grad += g.transpose();
                           });
}

inline Value exp(Value a) {
  Mat out = a.val().array().exp();
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, out, [=](Tape& tp, const Mat& g) {
    tp.node(ai).grad += g.cwiseProduct(out);
  });
}

inline Value log(Value a) {
  std::size_t ai = a.id;
  Mat inv = a.val().array().inverse();
  return detail::make_node(*a.tape, Mat(a.val().array().log()),
                           [=, inv = std::move(inv)](Tape& tp, const Mat& g) {
                             tp.node(ai).grad += g.cwiseProduct(inv);
                           });
}

inline Value tanh(Value a) {
  Mat out = a.val().array().tanh();
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, out, [=](Tape& tp, const Mat& g) {
    tp.node(ai).grad +=
        g.cwiseProduct(Mat(1.0 - out.array().square()));
  });
}

inline Value sigmoid(Value a) {
  Mat out = a.val().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
  });
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, out, [=](Tape& tp, const Mat& g) {
    tp.node(ai).grad +=
        g.cwiseProduct(Mat(out.array() * (1.0 - out.array())));
  });
}

// Subgradient at 0 is 0 (the inactive side).
inline Value relu(Value a) {
  Mat mask = (a.val().array() > 0.0).cast<double>();
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, Mat(a.val().cwiseMax(0.0)),
                           [=, mask = std::move(mask)](Tape& tp, const Mat& g) {
                             tp.node(ai).grad += g.cwiseProduct(mask);
                           });
}

inline Value leaky_relu(Value a, double alpha) {
  Mat slope = (a.val().array() > 0.0).select(Mat::Ones(a.rows(), a.cols()),
                                             Mat::Constant(a.rows(), a.cols(),
                                                           alpha));
  Mat out = a.val().cwiseProduct(slope);
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, std::move(out),
                           [=, slope = std::move(slope)](Tape& tp,
                                                         const Mat& g) {
                             tp.node(ai).grad += g.cwiseProduct(slope);
                           });
}

inline Value square(Value a) {
  std::size_t ai = a.id;
  Mat v = a.val();
  Mat out = v.array().square();
  return detail::make_node(*a.tape, std::move(out),
                           [=, v = std::move(v)](Tape& tp, const Mat& g) {
                             tp.node(ai).grad += 2.0 * g.cwiseProduct(v);
                           });
}

// Gradient passes only where the input was strictly inside [lo, hi].
inline Value clamp(Value a, double lo, double hi) {
  Mat mask = ((a.val().array() > lo) && (a.val().array() < hi)).cast<double>();
  Mat out = a.val().cwiseMax(lo).cwiseMin(hi);
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, std::move(out),
                           [=, mask = std::move(mask)](Tape& tp, const Mat& g) {
                             tp.node(ai).grad += g.cwiseProduct(mask);
                           });
}

// ---------------------------------------------------------------------------
// Reductions and structured ops
// ---------------------------------------------------------------------------

inline Value sum_all(Value a) {
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, Mat::Constant(1, 1, a.val().sum()),
                           [=](Tape& tp, const Mat& g) {
                             tp.node(ai).grad.array() += g(0, 0);
                           });
}

inline Value mean_all(Value a) {
  auto n = a.rows() * a.cols();
  if (n == 0) throw argument_error("mean_all: empty matrix");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

// (B, C) -> (B, 1)
inline Value row_sum(Value a) {
  std::size_t ai = a.id;
  auto c = a.cols();
  return detail::make_node(*a.tape, Mat(a.val().rowwise().sum()),
                           [=](Tape& tp, const Mat& g) {
                             tp.node(ai).grad += g.replicate(1, c);
                           });
}

// Column means over the batch dimension: (B, C) -> (1, C).
inline Value mean_over_rows(Value a) {
  auto b = a.rows();
  if (b == 0) throw argument_error("mean_over_rows: empty batch");
  std::size_t ai = a.id;
  return detail::make_node(
      *a.tape, Mat(a.val().colwise().mean()), [=](Tape& tp, const Mat& g) {
        tp.node(ai).grad += g.replicate(b, 1) / static_cast<double>(b);
      });
}

// Row-wise log(sum_j exp(a_ij) [+ exp(0)]), computed with max subtraction.
// with_zero appends an implicit always-zero logit to every row.
inline Value logsumexp_rows(Value a, bool with_zero = false) {
  const Mat& v = a.val();
  Mat out(v.rows(), 1);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    double m = with_zero ? 0.0 : -std::numeric_limits<double>::infinity();
    m = std::max(m, v.cols() > 0 ? v.row(i).maxCoeff() : m);
    double s = with_zero ? std::exp(-m) : 0.0;
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      s += std::exp(v(i, j) - m);
    }
    out(i, 0) = m + std::log(s);
  }
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, out, [=](Tape& tp, const Mat& g) {
    const Mat& av = tp.node(ai).value;
    Mat& ag = tp.node(ai).grad;
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
      for (Eigen::Index j = 0; j < av.cols(); ++j) {
        ag(i, j) += g(i, 0) * std::exp(av(i, j) - out(i, 0));
      }
    }
  });
}

// Picks one column per row: out(i, 0) = a(i, idx[i]). Indices are 0-based.
inline Value select_cols(Value a, const std::vector<int>& idx) {
  const Mat& v = a.val();
  if (static_cast<Eigen::Index>(idx.size()) != v.rows()) {
    throw argument_error("select_cols: index count != batch size");
  }
  Mat out(v.rows(), 1);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (idx[i] < 0 || idx[i] >= v.cols()) {
      throw argument_error("select_cols: index out of range");
    }
    out(i, 0) = v(i, idx[i]);
  }
  std::size_t ai = a.id;
  return detail::make_node(*a.tape, std::move(out),
                           [=](Tape& tp, const Mat& g) {
                             Mat& ag = tp.node(ai).grad;
                             for (Eigen::Index i = 0; i < g.rows(); ++i) {
                               ag(i, idx[i]) += g(i, 0);
                             }
                           });
}

// Gathers rows of a (K, 1) column vector: out(i, 0) = v(idx[i], 0).
inline Value gather_rows(Value v, const std::vector<int>& idx) {
  const Mat& m = v.val();
  if (m.cols() != 1) throw argument_error("gather_rows: expects a column");
  Mat out(static_cast<Eigen::Index>(idx.size()), 1);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= m.rows()) {
      throw argument_error("gather_rows: index out of range");
    }
    out(static_cast<Eigen::Index>(i), 0) = m(idx[i], 0);
  }
  std::size_t vi = v.id;
  return detail::make_node(*v.tape, std::move(out),
                           [=](Tape& tp, const Mat& g) {
                             Mat& vg = tp.node(vi).grad;
                             for (Eigen::Index i = 0; i < g.rows(); ++i) {
                               vg(idx[i], 0) += g(i, 0);
                             }
                           });
}

// ---------------------------------------------------------------------------
// Convolution (NCHW rows flattened to (batch, C*H*W))
// ---------------------------------------------------------------------------

struct Conv2dGeom {
  int in_c, in_h, in_w;
  int out_c, k, stride, pad;

  int out_h() const { return (in_h + 2 * pad - k) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - k) / stride + 1; }
};

namespace detail {

// (C*H*W) row -> (C*k*k, out_h*out_w) patch matrix. Zero padding.
inline Mat im2col(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                  const Conv2dGeom& g) {
  const int oh = g.out_h(), ow = g.out_w();
  Mat col = Mat::Zero(g.in_c * g.k * g.k, oh * ow);
  for (int c = 0; c < g.in_c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const int row = (c * g.k + ky) * g.k + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix < 0 || ix >= g.in_w) continue;
            col(row, oy * ow + ox) = x((c * g.in_h + iy) * g.in_w + ix);
          }
        }
      }
    }
  }
  return col;
}

inline void col2im_add(Eigen::Ref<Eigen::RowVectorXd> dx, const Mat& dcol,
                       const Conv2dGeom& g) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int c = 0; c < g.in_c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const int row = (c * g.k + ky) * g.k + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix < 0 || ix >= g.in_w) continue;
            dx((c * g.in_h + iy) * g.in_w + ix) += dcol(row, oy * ow + ox);
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: (B, in_c*in_h*in_w), w: (out_c, in_c*k*k), b: (1, out_c).
// Returns (B, out_c*out_h*out_w).
inline Value conv2d(Value x, Value w, Value b, const Conv2dGeom& geom) {
  Tape& t = detail::same_tape(x, w);
  detail::same_tape(x, b);
  if (x.cols() != geom.in_c * geom.in_h * geom.in_w) {
    throw argument_error("conv2d: input width does not match geometry");
  }
  if (w.rows() != geom.out_c || w.cols() != geom.in_c * geom.k * geom.k) {
    throw argument_error("conv2d: weight shape does not match geometry");
  }
  const int oh = geom.out_h(), ow = geom.out_w();
  const Eigen::Index batch = x.rows();
  Mat out(batch, geom.out_c * oh * ow);
  std::vector<Mat> cols(static_cast<std::size_t>(batch));
  for (Eigen::Index i = 0; i < batch; ++i) {
    cols[i] = detail::im2col(x.val().row(i), geom);
    Mat y = w.val() * cols[i];  // (out_c, oh*ow)
    y.colwise() += b.val().row(0).transpose();
    for (int c = 0; c < geom.out_c; ++c) {
      for (int p = 0; p < oh * ow; ++p) {
        out(i, c * oh * ow + p) = y(c, p);
      }
    }
  }
  std::size_t xi = x.id, wi = w.id, bi = b.id;
  return detail::make_node(
      t, std::move(out),
      [=, cols = std::move(cols)](Tape& tp, const Mat& g) {
        const int npix = oh * ow;
        for (Eigen::Index i = 0; i < batch; ++i) {
          Mat dy(geom.out_c, npix);
          for (int c = 0; c < geom.out_c; ++c) {
            for (int p = 0; p < npix; ++p) {
              dy(c, p) = g(i, c * npix + p);
            }
          }
          tp.node(wi).grad += dy * cols[static_cast<std::size_t>(i)].transpose();
          tp.node(bi).grad.row(0) += dy.rowwise().sum().transpose();
          Mat dcol = tp.node(wi).value.transpose() * dy;
          Eigen::RowVectorXd dx = Eigen::RowVectorXd::Zero(
              geom.in_c * geom.in_h * geom.in_w);
          detail::col2im_add(dx, dcol, geom);
          tp.node(xi).grad.row(i) += dx;
        }
      });
}

// Nearest-neighbour 2x upsampling of (B, c*h*w) -> (B, c*2h*2w).
inline Value upsample2_nn(Value x, int c, int h, int w) {
  if (x.cols() != static_cast<Eigen::Index>(c) * h * w) {
    throw argument_error("upsample2_nn: input width does not match geometry");
  }
  const Eigen::Index batch = x.rows();
  const int oh = 2 * h, ow = 2 * w;
  Mat out(batch, static_cast<Eigen::Index>(c) * oh * ow);
  for (Eigen::Index i = 0; i < batch; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          out(i, (ch * oh + y) * ow + xx) =
              x.val()(i, (ch * h + y / 2) * w + xx / 2);
        }
      }
    }
  }
  std::size_t xi = x.id;
  return detail::make_node(*x.tape, std::move(out),
                           [=](Tape& tp, const Mat& g) {
                             Mat& xg = tp.node(xi).grad;
                             for (Eigen::Index i = 0; i < batch; ++i) {
                               for (int ch = 0; ch < c; ++ch) {
                                 for (int y = 0; y < oh; ++y) {
                                   for (int xx = 0; xx < ow; ++xx) {
                                     xg(i, (ch * h + y / 2) * w + xx / 2) +=
                                         g(i, (ch * oh + y) * ow + xx);
                                   }
                                 }
                               }
                             }
                           });
}

}  // namespace sslosr::ad
