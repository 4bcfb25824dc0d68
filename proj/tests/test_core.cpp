#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "qnn/error.hpp"
#include "qnn/ops.hpp"
#include "qnn/rng.hpp"

using namespace qnn;

TEST_CASE("tensor construction") {
  Tensor t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t[5] == 1.5f);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), DimensionError);
  CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  t[2] = std::nanf("");
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.check_finite("t"), NumericError);
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(42, 3), b(42, 3), c(42, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  CHECK(Rng(7).split(5).next_u64() == Rng(7).split(5).next_u64());
  CHECK(Rng(7).split(5).next_u64() != Rng(7).split(6).next_u64());

  Rng u(9);
  for (int i = 0; i < 10000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
    const double y = u.uniform_open();
    CHECK((y > 0.0 && y < 1.0));
    CHECK(u.uniform_int(7) < 7);
  }
}

TEST_CASE("rng normal moments") {
  Rng r(5);
  double s = 0, q = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    q += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(q / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("matmul examples") {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {1, 2, 3, 4});
  CHECK(matmul(eye, m) == m);
  CHECK(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}))[0] == 11.0f);
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("[2x3] and [2x3]") != std::string::npos);
  }
}

TEST_CASE("conv2d examples") {
  const Tensor ones({1, 1, 3, 3}, 1.0f);
  const Tensor y = conv2d(ones, ones, {1, 1});
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.at(0, 0, 1, 1) == 9.0f);
  CHECK(y.at(0, 0, 0, 0) == 4.0f);
  CHECK(conv2d_output_shape({2, 3, 8, 8}, {4, 3, 3, 3}, {2, 1}) == Shape{2, 4, 4, 4});
  CHECK_THROWS_AS(conv2d(Tensor({1, 1, 2, 2}), Tensor({1, 1, 5, 5}), {1, 0}), DimensionError);
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), {1, 1}), DimensionError);
}

TEST_CASE("conv2d matches a direct oracle") {
  Rng rng(21);
  for (auto [stride, pad] : {std::pair{1ul, 1ul}, {2ul, 1ul}, {1ul, 0ul}, {2ul, 0ul}}) {
    const Tensor x = oracle::random_tensor({2, 3, 7, 6}, rng);
    const Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng);
    std::size_t ho = 0, wo = 0;
    const auto expect = oracle::conv2d(x, w, stride, pad, ho, wo);
    const Tensor y = conv2d(x, w, {stride, pad});
    REQUIRE(y.shape() == Shape{2, 4, ho, wo});
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-5));
  }
}

TEST_CASE("1x1 conv equals per-pixel matmul over channels") {
  Rng rng(22);
  const Tensor x = oracle::random_tensor({2, 5, 3, 4}, rng);
  const Tensor w = oracle::random_tensor({6, 5, 1, 1}, rng);
  const Tensor y = conv2d(x, w, {1, 0});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        Tensor px({1, 5});
        for (std::size_t c = 0; c < 5; ++c) px[c] = x.at(b, c, i, j);
        const Tensor out = matmul(px, transpose2d(w.reshaped({6, 5})));
        for (std::size_t f = 0; f < 6; ++f) CHECK(y.at(b, f, i, j) == doctest::Approx(out[f]).epsilon(1e-6));
      }
}

TEST_CASE("batchnorm examples") {
  Tensor x({4, 2, 1, 1}, {3, 1, 3, 2, 3, 3, 3, 4});
  const Tensor gamma({2}, {2.5f, 1.0f}), beta({2}, {0.7f, 0.0f});
  Tensor rm({2}), rv({2}, 1.0f);
  const Tensor y = batchnorm_forward(x, gamma, beta, rm, rv, Mode::train, {}, nullptr);
  for (std::size_t b = 0; b < 4; ++b) CHECK(y.at(b, 0, 0, 0) == doctest::Approx(0.7f));
  CHECK(std::isfinite(y.at(0, 1, 0, 0)));

  // unbiased running variance: channel 1 = {1,2,3,4}, var_unbiased = 5/3
  CHECK(rv[1] == doctest::Approx(0.9 + 0.1 * (5.0 / 3.0)));
  CHECK(rm[1] == doctest::Approx(0.1 * 2.5));

  // already standardized channel stays put (up to eps)
  Tensor z({4, 1}, {-1.3416408f, -0.4472136f, 0.4472136f, 1.3416408f});
  Tensor m1({1}), v1({1}, 1.0f);
  const Tensor yz = batchnorm_forward(z, Tensor({1}, 1.0f), Tensor({1}), m1, v1, Mode::train, {}, nullptr);
  for (std::size_t i = 0; i < 4; ++i) CHECK(yz[i] == doctest::Approx(z[i]).epsilon(1e-4));

  // eval mode reads the running statistics
  Tensor em({1}, {1.0f}), ev({1}, {4.0f});
  const Tensor ye = batchnorm_forward(Tensor({1, 1}, {5.0f}), Tensor({1}, 1.0f), Tensor({1}), em, ev, Mode::eval, {},
                                      nullptr);
  CHECK(ye[0] == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)));
  CHECK(em[0] == 1.0f);
}

TEST_CASE("softmax cross-entropy examples") {
  const std::vector<int> labels{3};
  const auto u = softmax_cross_entropy(Tensor({1, 10}), labels);
  CHECK(u.loss == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  Tensor sat({1, 10});
  sat[3] = 1000.0f;
  CHECK(softmax_cross_entropy(sat, labels).loss == doctest::Approx(0.0).epsilon(1e-6));
  const std::vector<int> bad{10};
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor({1, 10}), bad), InputError);
}

TEST_CASE("sgd momentum step") {
  Param p(Tensor({1}, {1.0f}));
  p.grad[0] = 0.5f;
  sgd_momentum_step(p, 0.1f, 0.0f, 0.0f);
  CHECK(p.value[0] == doctest::Approx(0.95f));
  CHECK(p.grad[0] == 0.0f);

  Param still(Tensor({1}, {2.0f}));
  sgd_momentum_step(still, 0.1f, 0.9f, 0.0f);
  CHECK(still.value[0] == 2.0f);

  Param m(Tensor({1}, {0.0f}));
  for (int i = 0; i < 2; ++i) {
    m.grad[0] = 1.0f;
    sgd_momentum_step(m, 0.1f, 0.9f, 0.0f);
  }
  CHECK(m.value[0] == doctest::Approx(-0.1 * 2.9).epsilon(1e-6));

  Param d(Tensor({1}, {2.0f}));
  sgd_momentum_step(d, 0.5f, 0.0f, 0.1f);
  CHECK(d.value[0] == doctest::Approx(2.0f - 0.5f * 0.2f));
}

TEST_CASE("finite difference helper") {
  Rng rng(3);
  const Tensor x = oracle::random_tensor({10}, rng);
  Tensor g2 = x;
  for (auto& v : g2.values()) v *= 2.0f;
  const auto sumsq = [](const Tensor& t) {
    double s = 0;
    for (float v : t.values()) s += double(v) * v;
    return s;
  };
  CHECK(finite_diff_check(sumsq, x, g2, 1e-3f) < 1e-4);
  const auto sum = [](const Tensor& t) {
    double s = 0;
    for (float v : t.values()) s += v;
    return s;
  };
  CHECK(finite_diff_check(sum, x, Tensor({10}, 1.0f), 1e-3f) < 1e-6);
  CHECK(default_fd_step(Tensor({2}, {-3.0f, 1.0f})) == doctest::Approx(0.04f));
}
