#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qnn/calibration.hpp"
#include "qnn/model.hpp"

namespace qnn {

// Binary layout, all integers and floats little-endian:
//   "QNNCKPT1"            8 bytes
//   version               u32 (= kCheckpointVersion)
//   tensor count          u32
//   per tensor:
//     name length u16, name bytes (UTF-8)
//     ndim u8, dims u32 × ndim
//     payload f32 × product(dims)
inline constexpr char kCheckpointMagic[8] = {'Q', 'N', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
// Calibration rows: [entries × 5] of (n_bin, c1, c2, residual_max, r_squared).
inline constexpr const char* kCalibrationTensorName = "sawb.calibration";

struct NamedTensorValue {
  std::string name;
  Tensor tensor;
};

std::vector<char> encode_checkpoint(const std::vector<NamedTensorValue>& tensors);
std::vector<NamedTensorValue> decode_checkpoint(const std::vector<char>& bytes);

// Every parameter (weights, biases, BatchNorm affine terms, clipping levels),
// the BatchNorm running statistics and the calibration table in use.
std::vector<NamedTensorValue> model_state(Model& model, const sawb::CalibrationTable& calibration);

void save_checkpoint(const std::filesystem::path& path, Model& model, const sawb::CalibrationTable& calibration);

// Validates the whole file against `model` before touching it: any unknown
// or missing tensor name, or a shape mismatch, raises CompatibilityError and
// leaves the model unchanged. Returns the stored calibration table.
sawb::CalibrationTable load_checkpoint(const std::filesystem::path& path, Model& model);

}  // namespace qnn
