#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "oracles.hpp"
#include "qnn/kernels.hpp"
#include "qnn/sawb.hpp"

using namespace qnn;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(lo + (hi - lo) * rng.uniform());
  return v;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

const simd::KernelTable& ref() { return simd::scalar_kernels(); }

}  // namespace

TEST_CASE("scalar gemm matches a double oracle") {
  Rng rng(11);
  for (auto [m, k, n] : {std::tuple{1ul, 1ul, 1ul}, {3ul, 7ul, 5ul}, {4ul, 9ul, 33ul}, {2ul, 64ul, 70ul}}) {
    const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
    std::vector<float> c(m * n, 0.0f);
    ref().gemm_acc(a.data(), b.data(), c.data(), m, k, n);
    const auto expect = oracle::matmul({a.begin(), a.end()}, {b.begin(), b.end()}, m, k, n);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-5));
  }
}

TEST_CASE("reductions match a double oracle") {
  Rng rng(12);
  const auto x = random_vec(1001, rng);
  const auto y = random_vec(1001, rng);
  double s = 0, a = 0, q = 0, d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += x[i];
    a += std::abs(x[i]);
    q += double(x[i]) * x[i];
    d += (double(x[i]) - y[i]) * (double(x[i]) - y[i]);
  }
  CHECK(ref().sum(x.data(), x.size()) == doctest::Approx(s).epsilon(1e-12));
  const auto sums = ref().abs_sq_sums(x.data(), x.size());
  CHECK(sums.abs == doctest::Approx(a).epsilon(1e-12));
  CHECK(sums.sq == doctest::Approx(q).epsilon(1e-12));
  CHECK(ref().sq_diff_sum(x.data(), y.data(), x.size()) == doctest::Approx(d).epsilon(1e-12));
}

TEST_CASE("AVX2 kernels are bit-identical to the scalar reference") {
  const simd::KernelTable* v = simd::avx2_kernels();
  if (v == nullptr || !simd::cpu_has_avx2()) {
    MESSAGE("AVX2 not available; skipping");
    return;
  }
  Rng rng(13);
  for (std::size_t n : {0ul, 1ul, 3ul, 4ul, 7ul, 8ul, 9ul, 15ul, 16ul, 31ul, 32ul, 33ul, 100ul, 1027ul}) {
    CAPTURE(n);
    auto x = random_vec(n, rng, -3.0, 3.0);
    const auto y = random_vec(n, rng, -3.0, 3.0);
    const auto g = random_vec(n, rng);
    // Plant exact boundary values.
    if (n > 3) {
      x[0] = 0.0f;
      x[1] = 1.5f;
      x[2] = -0.0f;
      x[3] = std::numeric_limits<float>::quiet_NaN();
    }

    std::vector<float> r1(n), r2(n);
    auto y1 = y, y2 = y;
    ref().add_inplace(x.data(), y1.data(), n);
    v->add_inplace(x.data(), y2.data(), n);
    CHECK(bits_equal(y1, y2));

    ref().clip(x.data(), r1.data(), n, 1.5f);
    v->clip(x.data(), r2.data(), n, 1.5f);
    CHECK(bits_equal(r1, r2));
    if (n > 3) CHECK(std::isnan(r1[3]));
    if (n > 3) x[3] = 0.25f;

    std::vector<float> c(n);
    ref().clip(x.data(), c.data(), n, 1.5f);
    for (int bits : {1, 2, 4, 8}) {
      const double levels = std::ldexp(1.0, bits) - 1.0;
      ref().uniform_quantize(c.data(), r1.data(), n, 1.5f, levels);
      v->uniform_quantize(c.data(), r2.data(), n, 1.5f, levels);
      CHECK(bits_equal(r1, r2));
    }

    const double ga = ref().clip_backward(x.data(), g.data(), r1.data(), n, 1.5f);
    const double gb = v->clip_backward(x.data(), g.data(), r2.data(), n, 1.5f);
    CHECK(bits_equal(r1, r2));
    CHECK(bits_equal(ga, gb));

    for (int nb : sawb::kSupportedBins) {
      const sawb::LevelSet set(nb, 1.25f);
      ref().quantize_levels(x.data(), r1.data(), n, set.table());
      v->quantize_levels(x.data(), r2.data(), n, set.table());
      CHECK(bits_equal(r1, r2));
    }

    const auto s1 = ref().abs_sq_sums(x.data(), n), s2 = v->abs_sq_sums(x.data(), n);
    CHECK(bits_equal(s1.abs, s2.abs));
    CHECK(bits_equal(s1.sq, s2.sq));
    CHECK(bits_equal(ref().sq_diff_sum(x.data(), y.data(), n), v->sq_diff_sum(x.data(), y.data(), n)));
    CHECK(bits_equal(ref().sum(x.data(), n), v->sum(x.data(), n)));
  }

  for (auto [m, k, n] : {std::tuple{1ul, 1ul, 1ul}, {5ul, 3ul, 7ul}, {3ul, 27ul, 32ul}, {4ul, 72ul, 65ul},
                         {2ul, 9ul, 256ul}, {6ul, 16ul, 100ul}}) {
    CAPTURE(m);
    CAPTURE(n);
    const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
    auto c1 = random_vec(m * n, rng);
    auto c2 = c1;
    ref().gemm_acc(a.data(), b.data(), c1.data(), m, k, n);
    v->gemm_acc(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(bits_equal(c1, c2));
  }
}

TEST_CASE("ISA selection") {
  const simd::Isa before = simd::kernels().isa;
  CHECK(simd::set_isa(simd::Isa::scalar));
  CHECK(simd::kernels().isa == simd::Isa::scalar);
  if (simd::avx2_kernels() != nullptr && simd::cpu_has_avx2()) {
    CHECK(simd::set_isa(simd::Isa::avx2));
    CHECK(simd::kernels().isa == simd::Isa::avx2);
  }
  simd::set_isa(before);
}
