#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "qnn/calibration.hpp"
#include "qnn/distributions.hpp"
#include "qnn/error.hpp"
#include "qnn/sawb.hpp"

using namespace qnn;
using namespace qnn::sawb;

namespace {
float qw(float w, float alpha, int n_bin) { return quantize_weights(Tensor::scalar(w), alpha, n_bin)[0]; }
}  // namespace

TEST_CASE("bin levels") {
  const auto l4 = bin_levels(4, 1.0f);
  REQUIRE(l4.size() == 4);
  CHECK(l4[0] == -1.0f);
  CHECK(l4[1] == doctest::Approx(-1.0 / 3.0));
  CHECK(l4[2] == doctest::Approx(1.0 / 3.0));
  CHECK(l4[3] == 1.0f);
  CHECK(bin_levels(2, 1.0f) == std::vector<float>{-1.0f, 1.0f});
  CHECK(bin_levels(3, 0.5f) == std::vector<float>{-0.5f, 0.0f, 0.5f});
  for (int n : kSupportedBins) {
    const auto l = bin_levels(n, 2.0f);
    const auto o = oracle::weight_levels(n, 2.0);
    REQUIRE(l.size() == static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) CHECK(l[i] == doctest::Approx(o[i]).epsilon(1e-6));
  }
  CHECK_THROWS_AS(bin_levels(5, 1.0f), ParameterError);
  CHECK_THROWS_AS(bin_levels(4, 0.0f), ParameterError);
}

TEST_CASE("weight quantization examples") {
  CHECK(qw(0.2f, 1.0f, 4) == doctest::Approx(1.0 / 3.0));
  CHECK(qw(-5.0f, 1.0f, 4) == -1.0f);
  for (float l : bin_levels(8, 0.7f)) CHECK(qw(l, 0.7f, 8) == l);
  // exact midpoint between 0 and 0.5 goes to the larger magnitude
  CHECK(qw(0.25f, 0.5f, 3) == 0.5f);
  CHECK(qw(-0.25f, 0.5f, 3) == -0.5f);
  CHECK(qw(0.0f, 1.0f, 2) == 1.0f);
}

TEST_CASE("weight statistics and error") {
  const WeightStats s = weight_stats(Tensor({2}, {-1.0f, 1.0f}));
  CHECK(s.e_abs == 1.0f);
  CHECK(s.e_sq == 1.0f);
  CHECK_THROWS_AS(weight_stats(Tensor{}), InputError);

  const Tensor w({2}, {1.0f, -1.0f});
  const Tensor wq({2}, {1.0f / 3.0f, -1.0f / 3.0f});
  CHECK(quant_mse(w, w) == 0.0);
  CHECK(quant_mse(w, wq) == doctest::Approx(4.0 / 9.0));
  CHECK(quant_se(w, wq) == doctest::Approx(8.0 / 9.0));
  CHECK(quant_mse(Tensor({2}, {-1.0f, 1.0f}), Tensor({2}, {-1.0f / 3.0f, 1.0f / 3.0f})) == quant_mse(w, wq));
  CHECK_THROWS_AS(quant_mse(w, Tensor({3})), DimensionError);
}

TEST_CASE("analytic moments of the estimator inputs") {
  Rng rng(100);
  const WeightStats u = weight_stats(sample_distribution(Distribution::uniform, 1000000, rng));
  CHECK(std::sqrt(u.e_sq) / u.e_abs == doctest::Approx(2.0 / std::sqrt(3.0)).epsilon(0.01));
  const WeightStats g = weight_stats(sample_distribution(Distribution::gaussian, 1000000, rng));
  CHECK(std::sqrt(g.e_sq) / g.e_abs == doctest::Approx(std::sqrt(M_PI / 2.0)).epsilon(0.01));
}

TEST_CASE("distribution samplers") {
  Rng rng(101);
  const std::size_t n = 1000000;
  const auto mean = [](const Tensor& t) {
    double s = 0;
    for (float v : t.values()) s += v;
    return s / static_cast<double>(t.size());
  };
  const Tensor u = sample_distribution(Distribution::uniform, n, rng);
  CHECK(std::abs(mean(u)) < 0.005);
  CHECK(weight_stats(u).e_sq == doctest::Approx(1.0 / 3.0).epsilon(0.01));
  CHECK(*std::max_element(u.values().begin(), u.values().end()) <= 1.0f);

  CHECK(weight_stats(sample_distribution(Distribution::laplace, n, rng)).e_abs == doctest::Approx(1.0).epsilon(0.01));
  // logistic(0, 1): variance π²/3
  CHECK(weight_stats(sample_distribution(Distribution::logistic, n, rng)).e_sq ==
        doctest::Approx(M_PI * M_PI / 3.0).epsilon(0.01));
  // triangle on [−2, 2]: variance 4/6
  const Tensor tri = sample_distribution(Distribution::triangle, n, rng);
  CHECK(weight_stats(tri).e_sq == doctest::Approx(2.0 / 3.0).epsilon(0.01));
  CHECK(weight_stats(tri).e_abs == doctest::Approx(2.0 / 3.0).epsilon(0.01));

  const Tensor vm = sample_distribution(Distribution::vonmises, n, rng);
  CHECK(std::abs(mean(vm)) < 0.01);
  CHECK(*std::max_element(vm.values().begin(), vm.values().end()) <= static_cast<float>(M_PI));
  // E[cos θ] = I1(4)/I0(4)
  double c = 0;
  for (float v : vm.values()) c += std::cos(v);
  CHECK(c / n == doctest::Approx(0.8635).epsilon(0.005));

  for (Distribution d : kReferenceDistributions) CHECK(distribution_from_name(name(d)) == d);
  CHECK_THROWS_AS(distribution_from_name("cauchy"), ParameterError);
}

TEST_CASE("squared error by prefix sums equals direct evaluation") {
  Rng rng(102);
  const Tensor w = sample_distribution(Distribution::laplace, 3001, rng);
  const SortedMagnitudes sm(w);
  for (int n : kSupportedBins) {
    for (float a : {0.05f, 0.4f, 1.0f, 2.5f, 9.0f}) {
      // the library rounds levels to float; the oracle keeps them in double
      CHECK(sm.squared_error(a, n) == doctest::Approx(oracle::weight_se(w, a, n)).epsilon(1e-6));
      CHECK(quant_se(w, quantize_weights(w, a, n)) == doctest::Approx(oracle::weight_se(w, a, n)).epsilon(1e-6));
    }
  }
}

TEST_CASE("search methods agree with each other and with a direct oracle") {
  Rng rng(103);
  for (Distribution d : kReferenceDistributions) {
    const Tensor w = sample_distribution(d, 2000, rng);
    for (int n : kSupportedBins) {
      const SearchResult fast = optimal_alpha_search(w, n, 200, SearchMethod::prefix_sums, true);
      const SearchResult slow = optimal_alpha_search(w, n, 200, SearchMethod::brute_force, true);
      CHECK(fast.alpha_star == slow.alpha_star);
      CHECK(fast.mse_star == doctest::Approx(slow.mse_star).epsilon(1e-9));
      REQUIRE(fast.mse.size() == 200);
      for (double m : fast.mse) CHECK(fast.mse_star <= m);

      // independent scan
      float max_abs = 0;
      for (float v : w.values()) max_abs = std::max(max_abs, std::abs(v));
      double best = 1e300;
      for (int g = 1; g <= 200; ++g) {
        const double a = static_cast<float>(double(max_abs) * g / 200);
        best = std::min(best, oracle::weight_se(w, a, n) / w.size());
      }
      CHECK(fast.mse_star == doctest::Approx(best).epsilon(1e-6));
    }
  }
}

TEST_CASE("search edge cases") {
  const SearchResult exact = optimal_alpha_search(Tensor({2}, {-0.75f, 0.75f}), 2);
  CHECK(exact.alpha_star == 0.75f);
  CHECK(exact.mse_star == 0.0);
  CHECK_FALSE(exact.degenerate);

  const SearchResult zero = optimal_alpha_search(Tensor({5}), 4);
  CHECK(zero.degenerate);
  CHECK(zero.alpha_star == 0.0f);
  CHECK(zero.mse_star == 0.0);

  CHECK_THROWS_AS(optimal_alpha_search(Tensor({3}, 1.0f), 4, 1), ParameterError);
  CHECK_THROWS_AS(optimal_alpha_search(Tensor({3}, 1.0f), 6), ParameterError);

  // scale equivariance with the grid scaled along
  Rng rng(104);
  const Tensor w = sample_distribution(Distribution::gaussian, 5000, rng);
  Tensor w4 = w;
  for (auto& v : w4.values()) v *= 4.0f;
  const SearchResult a = optimal_alpha_search(w, 4), b = optimal_alpha_search(w4, 4);
  CHECK(b.alpha_star == doctest::Approx(4.0 * a.alpha_star).epsilon(1e-6));
}

TEST_CASE("gaussian optimum is stable and matches the Lloyd-Max uniform step") {
  // Optimal 4-level uniform quantizer for N(0,1): step 0.9957, outer level 1.4936.
  std::vector<double> alphas;
  for (std::uint64_t seed : {1, 2, 3}) {
    Rng rng(seed);
    const Tensor w = sample_distribution(Distribution::gaussian, 100000, rng);
    alphas.push_back(optimal_alpha_search(w, 4).alpha_star);
  }
  for (double a : alphas) {
    CHECK(a == doctest::Approx(1.4936).epsilon(0.02));
    CHECK(a == doctest::Approx(alphas[0]).epsilon(0.02));
  }
}

TEST_CASE("estimator") {
  const WeightStats s{0.5f, 0.36f};
  CHECK(estimate_alpha(s, {1.0f, 0.0f}) == doctest::Approx(0.6f));
  CHECK(estimate_alpha(s, {0.0f, 1.0f}) == 0.5f);
  CHECK_THROWS_AS(estimate_alpha({0.0f, 0.0f}, {1.0f, 0.0f}), InputError);

  Rng rng(105);
  const Tensor w = sample_distribution(Distribution::logistic, 10000, rng);
  Tensor neg = w, scaled = w;
  for (auto& v : neg.values()) v = -v;
  for (auto& v : scaled.values()) v *= 2.0f;
  const Coefficients c = default_table().coefficients(4);
  CHECK(estimate_alpha(weight_stats(neg), c) == estimate_alpha(weight_stats(w), c));
  CHECK(estimate_alpha(weight_stats(scaled), c) == 2.0f * estimate_alpha(weight_stats(w), c));
}

TEST_CASE("calibrated n_bin=4 estimate on fresh gaussian data stays within 7%") {
  Rng rng(106);
  const Tensor w = sample_distribution(Distribution::gaussian, 100000, rng);
  const Quantizer q(4, default_table().coefficients(4));
  const double se_hat = quant_se(w, q.quantize(w));
  const double se_star = optimal_alpha_search(w, 4).mse_star * w.size();
  CHECK(se_hat <= 1.07 * se_star);
}

TEST_CASE("line fit") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6}, y{3, 5, 7, 9, 11, 13};
  const LineFit f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.residual_max == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f.r_squared == doctest::Approx(1.0));
  const std::vector<double> same(6, 2.0);
  CHECK_THROWS_AS(fit_line(same, y), CalibrationError);

  // against the closed-form normal equations on noisy points
  const std::vector<double> yn{2.9, 5.3, 6.8, 9.4, 10.7, 13.2};
  const double mx = 3.5, my = std::accumulate(yn.begin(), yn.end(), 0.0) / 6;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 6; ++i) {
    sxy += (x[i] - mx) * (yn[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const LineFit g = fit_line(x, yn);
  CHECK(g.slope == doctest::Approx(sxy / sxx));
  CHECK(g.intercept == doctest::Approx(my - sxy / sxx * mx));
}

TEST_CASE("calibration is reproducible and round-trips through text") {
  CalibrationOptions o;
  o.n_samples = 10000;
  o.grid_size = 500;
  const std::vector<int> bins{2, 4};
  const CalibrationTable a = calibrate_table(bins, 7, o), b = calibrate_table(bins, 7, o);
  REQUIRE(a.entries.size() == 2);
  for (int n : bins) {
    CHECK(a.entries.at(n).coeffs.c1 == b.entries.at(n).coeffs.c1);
    CHECK(a.entries.at(n).coeffs.c2 == b.entries.at(n).coeffs.c2);
    CHECK(a.entries.at(n).points.size() == 6);
  }
  const std::vector<int> only4{4};
  CHECK(calibrate_table(only4, 7, o).entries.at(4).coeffs.c1 == a.entries.at(4).coeffs.c1);
  CHECK(format_table(a) == format_table(b));

  const CalibrationTable r = parse_table(format_table(a));
  CHECK(r.seed == 7);
  CHECK(r.n_samples == 10000);
  for (int n : bins) {
    CHECK(r.entries.at(n).coeffs.c1 == a.entries.at(n).coeffs.c1);
    CHECK(r.entries.at(n).coeffs.c2 == a.entries.at(n).coeffs.c2);
  }
  CHECK(format_table(r) == format_table(a));
  CHECK_THROWS_AS(r.coefficients(8), CalibrationError);
  CHECK_THROWS_AS(parse_table("n_bin,c1,c2,residual_max,r_squared\n4,1,2\n"), FormatError);
  CHECK_THROWS_AS(parse_table("n_bin,c1,c2,residual_max,r_squared\n5,1,2,0,1\n"), FormatError);

  o.n_samples = 100;
  CHECK_THROWS_AS(calibrate_coefficients(4, Rng(1), o), ParameterError);
}

TEST_CASE("built-in table covers every supported n_bin") {
  for (int n : kSupportedBins) CHECK(default_table().contains(n));
  CHECK(default_table().seed == 2018);
}
