#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qnn/rng.hpp"
#include "qnn/sawb.hpp"

namespace qnn::sawb {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_max = 0.0;
  double r_squared = 0.0;
};

// Ordinary least squares y ≈ slope·x + intercept. Throws CalibrationError if
// every x is equal.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

// One point of the fit: x = √E(w²)/E|w|, y = α*/E|w|.
struct CalibrationPoint {
  std::string distribution;
  double ratio = 0.0;
  double scaled_alpha = 0.0;
};

struct CalibrationEntry {
  int n_bin = 0;
  Coefficients coeffs;
  double residual_max = 0.0;
  double r_squared = 0.0;
  std::vector<CalibrationPoint> points;
};

struct CalibrationOptions {
  std::size_t n_samples = 100000;
  int grid_size = kDefaultGridSize;
  // Draws per distribution that enter the regression; 1 gives the six-point fit.
  int seeds_per_distribution = 1;
};

inline constexpr const char* kDistributionSetId = "gaussian,uniform,laplace,logistic,triangle,vonmises";

// Fits (c1, c2) for one n_bin over the six reference distributions. Stream
// layout: distribution d, repetition r draws from rng.split(d * 1000 + r).
CalibrationEntry calibrate_coefficients(int n_bin, Rng rng, const CalibrationOptions& opts = {});

struct CalibrationTable {
  std::map<int, CalibrationEntry> entries;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  int seeds_per_distribution = 1;
  std::string distribution_set = kDistributionSetId;

  bool contains(int n_bin) const { return entries.count(n_bin) != 0; }
  // Throws CalibrationError if n_bin was not calibrated.
  Coefficients coefficients(int n_bin) const;
};

// Entry for n_bin uses Rng(seed).split(n_bin), so a single-n_bin run matches
// the corresponding row of a full-table run.
CalibrationTable calibrate_table(std::span<const int> n_bins, std::uint64_t seed, const CalibrationOptions& opts = {});

// Text form: '#' comment lines with provenance, a header row
// `n_bin,c1,c2,residual_max,r_squared`, then one row per n_bin.
std::string format_table(const CalibrationTable& table);
CalibrationTable parse_table(const std::string& text);
void write_table(const CalibrationTable& table, const std::filesystem::path& path);
CalibrationTable read_table(const std::filesystem::path& path);

// Coefficients shipped with the library: the output of
// `qnn calibrate --seed 2018` (10^5 samples per distribution).
const CalibrationTable& default_table();

}  // namespace qnn::sawb
