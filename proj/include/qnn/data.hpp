#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "qnn/rng.hpp"
#include "qnn/tensor.hpp"

namespace qnn {

struct Dataset {
  Tensor images;  // N×C×H×W
  std::vector<int> labels;
  std::size_t classes = 10;

  std::size_t size() const { return labels.size(); }
  // Copies the selected samples, in the given order.
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

struct SyntheticOptions {
  std::size_t n = 1000;
  std::size_t classes = 2;
  std::size_t channels = 3;
  std::size_t height = 16;
  std::size_t width = 16;
  // Per-pixel noise around the class mean pattern.
  float sigma = 1.0f;
  // Mean patterns are drawn on a coarse grid and upsampled.
  std::size_t pattern_cells = 4;
};

// Class-conditional Gaussian blobs. Every class owns a smooth random mean
// image; a sample is its class mean plus i.i.d. N(0, sigma²) noise. Labels are
// balanced (n / classes each, remainder to the lowest classes) and shuffled.
// Mean patterns come from rng.split(0) and samples from rng.split(1), so the
// train and test sets of one task share patterns when built from the same rng.
Dataset gen_synthetic(const SyntheticOptions& opts, Rng rng);
// Train/test pair drawn around the same class means.
std::pair<Dataset, Dataset> gen_synthetic_split(const SyntheticOptions& opts, std::size_t n_train,
                                                std::size_t n_test, Rng rng);

// ---- CIFAR-10 --------------------------------------------------------------

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarImageBytes = 3072;
inline constexpr std::array<float, 3> kCifarMean{0.4914f, 0.4822f, 0.4465f};
inline constexpr std::array<float, 3> kCifarStd{0.2470f, 0.2435f, 0.2616f};

// Parses one binary batch file: records of 1 label byte + 3072 channel-planar
// pixel bytes. Pixels are scaled to [0,1] and standardized per channel with
// the fixed constants above.
Dataset read_cifar_batch(const std::filesystem::path& file);

struct CifarOptions {
  std::optional<std::size_t> train_subset;
  std::optional<std::size_t> test_subset;
};

// Reads data_batch_1..5.bin and test_batch.bin. Subsets are stratified by
// class and chosen with rng.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir, const CifarOptions& opts, Rng rng);

// Class-stratified subset of `count` samples, returned in ascending index order.
std::vector<std::size_t> stratified_indices(const std::vector<int>& labels, std::size_t classes, std::size_t count,
                                            Rng& rng);

// In place: zero-pad by `pad`, take a random crop of the original size, then
// mirror horizontally with probability 1/2. One draw set per image.
void augment_crop_flip(Tensor& batch, Rng& rng, std::size_t pad = 4);

}  // namespace qnn
