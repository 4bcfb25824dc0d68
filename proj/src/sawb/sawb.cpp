#include "qnn/sawb.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "qnn/error.hpp"

namespace qnn::sawb {

bool is_supported(int n_bin) {
  return std::find(kSupportedBins.begin(), kSupportedBins.end(), n_bin) != kSupportedBins.end();
}

void require_supported(int n_bin) {
  if (!is_supported(n_bin)) {
    throw ParameterError("unsupported n_bin " + std::to_string(n_bin) + " (expected one of 2, 3, 4, 8, 16, 32)");
  }
}

LevelSet::LevelSet(int n_bin, float alpha_w) {
  require_supported(n_bin);
  if (!(alpha_w > 0.0f)) throw ParameterError("weight scale must be positive, got " + std::to_string(alpha_w));
  const double a = alpha_w;
  const double span = n_bin - 1;
  if (n_bin % 2 == 0) {
    for (int j = 1; j <= n_bin / 2; ++j) levels_.push_back(static_cast<float>(a * (2 * j - 1) / span));
  } else {
    const double half = span / 2.0;
    for (int i = 0; i <= (n_bin - 1) / 2; ++i) levels_.push_back(static_cast<float>(a * i / half));
  }
  for (std::size_t j = 0; j + 1 < levels_.size(); ++j) {
    thresholds_.push_back((static_cast<double>(levels_[j]) + static_cast<double>(levels_[j + 1])) / 2.0);
  }
}

std::vector<float> bin_levels(int n_bin, float alpha_w) {
  const LevelSet set(n_bin, alpha_w);
  std::vector<float> out;
  for (auto it = set.levels().rbegin(); it != set.levels().rend(); ++it) {
    if (*it != 0.0f) out.push_back(-*it);
  }
  out.insert(out.end(), set.levels().begin(), set.levels().end());
  return out;
}

Tensor quantize_weights(const Tensor& w, float alpha_w, int n_bin) {
  const LevelSet set(n_bin, alpha_w);
  Tensor out(w.shape());
  simd::kernels().quantize_levels(w.data(), out.data(), w.size(), set.table());
  return out;
}

WeightStats weight_stats(const Tensor& w) {
  if (w.empty()) throw InputError("weight_stats: empty tensor");
  const simd::Sums s = simd::kernels().abs_sq_sums(w.data(), w.size());
  const double n = static_cast<double>(w.size());
  return {static_cast<float>(s.abs / n), static_cast<float>(s.sq / n)};
}

double quant_se(const Tensor& w, const Tensor& w_q) {
  require_same_shape(w, w_q, "quant_se");
  return simd::kernels().sq_diff_sum(w.data(), w_q.data(), w.size());
}

double quant_mse(const Tensor& w, const Tensor& w_q) {
  require_same_shape(w, w_q, "quant_mse");
  if (w.empty()) return 0.0;
  return quant_se(w, w_q) / static_cast<double>(w.size());
}

SortedMagnitudes::SortedMagnitudes(const Tensor& w) {
  sorted_.reserve(w.size());
  for (float v : w.values()) sorted_.push_back(std::fabs(static_cast<double>(v)));
  std::sort(sorted_.begin(), sorted_.end());
  prefix_abs_.assign(sorted_.size() + 1, 0.0);
  prefix_sq_.assign(sorted_.size() + 1, 0.0);
  for (std::size_t i = 0; i < sorted_.size(); ++i) {
    prefix_abs_[i + 1] = prefix_abs_[i] + sorted_[i];
    prefix_sq_[i + 1] = prefix_sq_[i] + sorted_[i] * sorted_[i];
  }
  if (!sorted_.empty()) max_abs_ = static_cast<float>(sorted_.back());
}

double SortedMagnitudes::squared_error(float alpha_w, int n_bin) const {
  const LevelSet set(n_bin, alpha_w);
  const auto levels = set.levels();
  const auto thresholds = set.thresholds();
  double total = 0.0;
  std::size_t lo = 0;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    const std::size_t hi =
        j < thresholds.size()
            ? static_cast<std::size_t>(std::lower_bound(sorted_.begin(), sorted_.end(), thresholds[j]) -
                                       sorted_.begin())
            : sorted_.size();
    if (hi > lo) {
      const double level = levels[j];
      const double s1 = prefix_abs_[hi] - prefix_abs_[lo];
      const double s2 = prefix_sq_[hi] - prefix_sq_[lo];
      total += s2 - 2.0 * level * s1 + level * level * static_cast<double>(hi - lo);
    }
    lo = hi;
  }
  return std::max(total, 0.0);
}

SearchResult optimal_alpha_search(const Tensor& w, int n_bin, int grid_size, SearchMethod method, bool keep_sweep) {
  require_supported(n_bin);
  if (w.empty()) throw InputError("optimal_alpha_search: empty tensor");
  if (grid_size < 2) throw ParameterError("optimal_alpha_search: grid_size must be >= 2");

  SearchResult result;
  float max_abs = 0.0f;
  for (float v : w.values()) max_abs = std::max(max_abs, std::fabs(v));
  if (max_abs == 0.0f) {
    result.degenerate = true;
    return result;
  }

  std::optional<SortedMagnitudes> sorted;
  if (method == SearchMethod::prefix_sums) sorted.emplace(w);
  const double n = static_cast<double>(w.size());

  bool first = true;
  for (int g = 1; g <= grid_size; ++g) {
    const float alpha = static_cast<float>(static_cast<double>(max_abs) * g / grid_size);
    if (!(alpha > 0.0f)) continue;
    const double se = method == SearchMethod::prefix_sums ? sorted->squared_error(alpha, n_bin)
                                                          : quant_se(w, quantize_weights(w, alpha, n_bin));
    const double mse = se / n;
    if (keep_sweep) {
      result.grid.push_back(alpha);
      result.mse.push_back(mse);
    }
    if (first || mse < result.mse_star) {
      result.alpha_star = alpha;
      result.mse_star = mse;
      first = false;
    }
  }
  return result;
}

float estimate_alpha(WeightStats stats, Coefficients coeffs) {
  if (!(stats.e_abs > 0.0f)) throw InputError("estimate_alpha: E|w| is zero (all-zero weights)");
  return coeffs.c1 * std::sqrt(stats.e_sq) + coeffs.c2 * stats.e_abs;
}

Quantizer::Quantizer(int n_bin, Coefficients coeffs) : n_bin_(n_bin), coeffs_(coeffs) { require_supported(n_bin); }

Tensor Quantizer::quantize(const Tensor& w) const {
  const float alpha = scale_for(w);
  if (!(alpha > 0.0f)) {
    throw NumericError("SAWB produced a non-positive scale " + std::to_string(alpha) + " for n_bin " +
                       std::to_string(n_bin_));
  }
  return quantize_weights(w, alpha, n_bin_);
}

}  // namespace qnn::sawb
