#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sslosr/ad.hpp"
#include "sslosr/rng.hpp"

using namespace sslosr;
using ad::Mat;

namespace {

Mat randm(Rng& rng, int r, int c) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  }
  return m;
}

// Central finite differences against the tape gradient for a scalar graph
// built from one leaf.
template <typename F>
double max_fd_error(const Mat& x0, F build) {
  ad::Tape t;
  auto x = t.leaf(x0);
  auto y = build(t, x);
  t.backward(y);
  Mat g = x.grad();

  const double h = 1e-5;
  double worst = 0;
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    for (Eigen::Index j = 0; j < x0.cols(); ++j) {
      Mat xp = x0, xm = x0;
      xp(i, j) += h;
      xm(i, j) -= h;
      ad::Tape tp, tm;
      const double fp = build(tp, tp.leaf(xp)).scalar();
      const double fm = build(tm, tm.leaf(xm)).scalar();
      const double fd = (fp - fm) / (2 * h);
      const double err = std::abs(fd - g(i, j)) /
                         std::max({1.0, std::abs(fd), std::abs(g(i, j))});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul forward matches hand arithmetic") {
  ad::Tape t;
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  auto y = ad::matmul(t.leaf(a), t.leaf(b));
  REQUIRE(y.val()(0, 0) == 19);
  REQUIRE(y.val()(0, 1) == 22);
  REQUIRE(y.val()(1, 0) == 43);
  REQUIRE(y.val()(1, 1) == 50);
}

TEST_CASE("logsumexp_rows matches naive sum and handles the zero logit") {
  ad::Tape t;
  Mat a(2, 3);
  a << 0.3, -1.2, 2.0, 10.0, 9.0, 8.0;
  auto l = ad::logsumexp_rows(t.leaf(a), false);
  auto l0 = ad::logsumexp_rows(t.leaf(a), true);
  for (int i = 0; i < 2; ++i) {
    double s = 0;
    for (int j = 0; j < 3; ++j) s += std::exp(a(i, j));
    REQUIRE_THAT(l.val()(i, 0),
                 Catch::Matchers::WithinAbs(std::log(s), 1e-12));
    REQUIRE_THAT(l0.val()(i, 0),
                 Catch::Matchers::WithinAbs(std::log(s + 1.0), 1e-12));
  }
}

TEST_CASE("logsumexp_rows is stable for huge logits") {
  ad::Tape t;
  Mat a(1, 2);
  a << 1000.0, 999.0;
  auto l = ad::logsumexp_rows(t.leaf(a), true);
  REQUIRE_THAT(l.val()(0, 0), Catch::Matchers::WithinAbs(
                                  1000.0 + std::log(1.0 + std::exp(-1.0)),
                                  1e-9));
}

TEST_CASE("broadcast add/sub/mul shapes") {
  ad::Tape t;
  Rng rng(1);
  auto a = t.leaf(randm(rng, 3, 4));
  auto row = t.leaf(randm(rng, 1, 4));
  auto col = t.leaf(randm(rng, 3, 1));
  REQUIRE(ad::add(a, row).val().rows() == 3);
  REQUIRE(ad::mul(a, col).val().cols() == 4);
  auto bad = t.leaf(randm(rng, 2, 4));
  REQUIRE_THROWS_AS(ad::add(a, bad), argument_error);
}

TEST_CASE("select_cols picks and validates") {
  ad::Tape t;
  Mat a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  auto s = ad::select_cols(t.leaf(a), {2, 0});
  REQUIRE(s.val()(0, 0) == 3);
  REQUIRE(s.val()(1, 0) == 4);
  REQUIRE_THROWS_AS(ad::select_cols(t.leaf(a), {3, 0}), argument_error);
  REQUIRE_THROWS_AS(ad::select_cols(t.leaf(a), {0}), argument_error);
}

TEST_CASE("relu subgradient at zero is zero") {
  ad::Tape t;
  Mat a(1, 3);
  a << -1.0, 0.0, 2.0;
  auto y = ad::sum_all(ad::relu(t.leaf(a)));
  t.backward(y);
  const Mat& g = t.node(0).grad;
  REQUIRE(g(0, 0) == 0.0);
  REQUIRE(g(0, 1) == 0.0);  // inactive side at the kink
  REQUIRE(g(0, 2) == 1.0);
}

TEST_CASE("clamp blocks gradient outside the interval") {
  ad::Tape t;
  Mat a(1, 3);
  a << -2.0, 0.5, 3.0;
  auto x = t.leaf(a);
  auto y = ad::sum_all(ad::clamp(x, 0.0, 1.0));
  t.backward(y);
  REQUIRE(x.grad()(0, 0) == 0.0);
  REQUIRE(x.grad()(0, 1) == 1.0);
  REQUIRE(x.grad()(0, 2) == 0.0);
  REQUIRE(ad::clamp(x, 0.0, 1.0).val()(0, 0) == 0.0);
  REQUIRE(ad::clamp(x, 0.0, 1.0).val()(0, 2) == 1.0);
}

TEST_CASE("gradients accumulate when a node is reused") {
  ad::Tape t;
  Mat a(1, 1);
  a << 3.0;
  auto x = t.leaf(a);
  auto y = ad::mul(x, x);  // x^2, both operands the same node
  t.backward(ad::sum_all(y));
  REQUIRE_THAT(x.grad()(0, 0), Catch::Matchers::WithinAbs(6.0, 1e-12));
}

TEST_CASE("finite differences across composite graphs") {
  Rng rng(17);
  Mat X = randm(rng, 4, 3), W = randm(rng, 3, 5), B = randm(rng, 1, 5);
  std::vector<int> idx{1, 4, 0, 2};

  SECTION("dense + lse + select") {
    auto err = max_fd_error(X, [&](ad::Tape& t, ad::Value x) {
      auto h = ad::tanh(ad::add(ad::matmul(x, t.constant(W)), t.constant(B)));
      return ad::mean_all(ad::sub(ad::logsumexp_rows(h, true),
                                  ad::select_cols(h, idx)));
    });
    REQUIRE(err < 1e-7);
  }
  SECTION("sigmoid, exp, log, square chain") {
    auto err = max_fd_error(X, [&](ad::Tape& t, ad::Value x) {
      auto s = ad::sigmoid(x);
      return ad::mean_all(
          ad::square(ad::log(ad::add_scalar(ad::exp(s), 1.0))));
    });
    REQUIRE(err < 1e-7);
  }
  SECTION("broadcast mul and transpose") {
    Mat C = randm(rng, 4, 1);
    auto err = max_fd_error(X, [&](ad::Tape& t, ad::Value x) {
      auto y = ad::mul(x, t.constant(C));
      return ad::sum_all(ad::matmul(y, ad::transpose(y)));
    });
    REQUIRE(err < 1e-7);
  }
  SECTION("gather_rows") {
    Mat V = randm(rng, 5, 1);
    std::vector<int> ridx{4, 0, 2, 2};
    auto err = max_fd_error(V, [&](ad::Tape& t, ad::Value v) {
      return ad::mean_all(ad::square(ad::gather_rows(v, ridx)));
    });
    REQUIRE(err < 1e-7);
  }
}

TEST_CASE("conv2d and upsample gradients match finite differences") {
  Rng rng(23);
  ad::Conv2dGeom geom{2, 5, 5, 3, 3, 2, 1};
  Mat X = randm(rng, 2, 2 * 5 * 5);
  Mat W = randm(rng, 3, 2 * 3 * 3);
  Mat B = randm(rng, 1, 3);

  auto dx = max_fd_error(X, [&](ad::Tape& t, ad::Value x) {
    return ad::mean_all(
        ad::tanh(ad::conv2d(x, t.constant(W), t.constant(B), geom)));
  });
  REQUIRE(dx < 1e-7);
  auto dw = max_fd_error(W, [&](ad::Tape& t, ad::Value w) {
    return ad::mean_all(
        ad::tanh(ad::conv2d(t.constant(X), w, t.constant(B), geom)));
  });
  REQUIRE(dw < 1e-7);
  auto db = max_fd_error(B, [&](ad::Tape& t, ad::Value b) {
    return ad::mean_all(
        ad::tanh(ad::conv2d(t.constant(X), t.constant(W), b, geom)));
  });
  REQUIRE(db < 1e-7);

  Mat U = randm(rng, 2, 9);
  auto du = max_fd_error(U, [&](ad::Tape& t, ad::Value u) {
    return ad::mean_all(ad::square(ad::upsample2_nn(u, 1, 3, 3)));
  });
  REQUIRE(du < 1e-7);
}

TEST_CASE("conv2d output geometry") {
  ad::Conv2dGeom g{1, 4, 4, 2, 3, 2, 1};
  REQUIRE(g.out_h() == 2);
  REQUIRE(g.out_w() == 2);
  ad::Tape t;
  Mat x = Mat::Ones(1, 16), w = Mat::Ones(2, 9), b = Mat::Zero(1, 2);
  auto y = ad::conv2d(t.leaf(x), t.leaf(w), t.leaf(b), g);
  REQUIRE(y.val().cols() == 2 * 2 * 2);
  // top-left window covers a 2x2 valid patch under padding 1
  REQUIRE(y.val()(0, 0) == 4.0);
}

TEST_CASE("backward rejects non-scalar roots and foreign values") {
  ad::Tape t, t2;
  auto a = t.leaf(Mat::Ones(2, 2));
  REQUIRE_THROWS_AS(t.backward(a), argument_error);
  auto b = t2.leaf(Mat::Ones(2, 2));
  REQUIRE_THROWS_AS(ad::add(a, b), argument_error);
}
