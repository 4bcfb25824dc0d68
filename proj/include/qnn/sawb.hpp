#pragma once

#include <array>
#include <span>
#include <vector>

#include "qnn/kernels.hpp"
#include "qnn/tensor.hpp"

namespace qnn::sawb {

inline constexpr std::array<int, 6> kSupportedBins{2, 3, 4, 8, 16, 32};
inline constexpr int kDefaultGridSize = 2000;

bool is_supported(int n_bin);
void require_supported(int n_bin);

// All n_bin levels, ascending, symmetric with extremes ±alpha_w. Even counts
// have no zero level; odd counts do.
std::vector<float> bin_levels(int n_bin, float alpha_w);

// Non-negative half of the levels plus the decision thresholds between them,
// in the form the quantize kernel consumes.
class LevelSet {
 public:
  LevelSet(int n_bin, float alpha_w);

  simd::LevelTable table() const { return {levels_.data(), thresholds_.data(), levels_.size()}; }
  std::span<const float> levels() const { return levels_; }
  std::span<const double> thresholds() const { return thresholds_; }

 private:
  std::vector<float> levels_;
  std::vector<double> thresholds_;
};

// Nearest level per element; ties go to the larger magnitude.
Tensor quantize_weights(const Tensor& w, float alpha_w, int n_bin);

// Straight-through: the gradient w.r.t. the quantized weights is applied to
// the latent full-precision weights unchanged.
inline Tensor weight_quant_backward(const Tensor& g_out) { return g_out; }

struct WeightStats {
  float e_abs = 0.0f;  // mean |w|
  float e_sq = 0.0f;   // mean w²
};
WeightStats weight_stats(const Tensor& w);

// Mean and sum of squared differences.
double quant_mse(const Tensor& w, const Tensor& w_q);
double quant_se(const Tensor& w, const Tensor& w_q);

// |w| sorted with prefix sums of |w| and w². Squared error of quantizing at
// any scale then costs O(n_bin · log n): every element between two decision
// thresholds maps to the same level, so its contribution is
// S2 − 2·L·S1 + L²·count over that segment.
class SortedMagnitudes {
 public:
  explicit SortedMagnitudes(const Tensor& w);

  double squared_error(float alpha_w, int n_bin) const;
  float max_abs() const { return max_abs_; }
  std::size_t size() const { return sorted_.size(); }

 private:
  std::vector<double> sorted_;
  std::vector<double> prefix_abs_;
  std::vector<double> prefix_sq_;
  float max_abs_ = 0.0f;
};

enum class SearchMethod { prefix_sums, brute_force };

struct SearchResult {
  float alpha_star = 0.0f;
  double mse_star = 0.0;
  bool degenerate = false;  // all-zero input
  // Filled when requested: the grid and the MSE at every grid point.
  std::vector<float> grid;
  std::vector<double> mse;
};

// Grid point g (1..grid_size) is max|w|·g/grid_size. Returns the grid point
// with the smallest MSE; the first one wins on exact ties.
SearchResult optimal_alpha_search(const Tensor& w, int n_bin, int grid_size = kDefaultGridSize,
                                  SearchMethod method = SearchMethod::prefix_sums, bool keep_sweep = false);

struct Coefficients {
  float c1 = 0.0f;
  float c2 = 0.0f;
};

// c1·√E(w²) + c2·E|w|
float estimate_alpha(WeightStats stats, Coefficients coeffs);

// Per-layer weight quantizer: scale re-estimated from the tensor being quantized.
class Quantizer {
 public:
  Quantizer(int n_bin, Coefficients coeffs);

  int n_bin() const { return n_bin_; }
  Coefficients coefficients() const { return coeffs_; }
  float scale_for(const Tensor& w) const { return estimate_alpha(weight_stats(w), coeffs_); }
  Tensor quantize(const Tensor& w) const;

 private:
  int n_bin_;
  Coefficients coeffs_;
};

}  // namespace qnn::sawb
