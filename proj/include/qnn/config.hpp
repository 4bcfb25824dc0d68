#pragma once

#include <filesystem>
#include <string>

#include "qnn/data.hpp"
#include "qnn/model.hpp"
#include "qnn/train.hpp"

namespace qnn {

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "cifar10"
  std::string cifar_dir;
  std::size_t subset = 0;       // cifar10 training subset, 0 = all
  std::size_t test_subset = 0;  // cifar10 test subset, 0 = all
  std::size_t train_samples = 2000;  // synthetic
  std::size_t test_samples = 1000;   // synthetic
  std::size_t classes = 10;
  std::size_t image_size = 16;
  std::size_t channels = 3;
  float sigma = 1.0f;
  std::size_t pattern_cells = 4;

  bool operator==(const DataConfig&) const = default;
};

// Everything a training run needs. On disk it is a line-oriented file:
//
//   # comment
//   [model]
//   blocks_per_stage = 1
//   ...
//
// Sections: model, training, quantization, data. Unknown sections or keys
// and duplicate keys are rejected. Keys missing from the file keep their
// defaults.
struct RunConfig {
  std::string name = "run";
  ResNetOptions model;
  TrainingConfig training;
  std::string calibration_table;  // empty = built-in table
  DataConfig data;

  bool operator==(const RunConfig&) const = default;

  // Model options with input geometry and class count taken from `data`.
  ModelSpec model_spec() const;
};

RunConfig parse_run_config(const std::string& text);
// Canonical form: every key, fixed order.
std::string serialize_run_config(const RunConfig& cfg);
RunConfig read_run_config(const std::filesystem::path& path);

// The desk-scale reference task: 8-layer pre-activation ResNet with 8/16/32
// channels, 2-bit activations and 4-bin weights, 40 epochs, on a 5000/1000
// synthetic image fixture with sigma = 3.
RunConfig desk_scale_config();

std::pair<Dataset, Dataset> load_datasets(const DataConfig& data, std::uint64_t seed);

}  // namespace qnn
