#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qnn/data.hpp"
#include "qnn/model.hpp"
#include "qnn/train.hpp"

namespace qnn {

// ---- single-neuron clipping network ----------------------------------------

struct NeuronSetup {
  float input = 1.0f;  // a
  float w0 = 2.0f;
  float alpha0 = 1.0f;
  float target = 3.0f;  // y*
  float eta = 0.1f;
  int steps = 10000;
};

enum class UpdatedParam { none, alpha, weight };

struct NeuronState {
  int step = 0;
  float w = 0.0f;
  float alpha = 0.0f;
  float x = 0.0f;
  float y = 0.0f;
  float loss = 0.0f;
  // What the SGD step taken from this state changed.
  UpdatedParam updated = UpdatedParam::none;
};

// x = w·a, y = clip(x, 0, alpha), L = ½(y* − y)². While x > alpha only alpha
// moves (dL/dalpha = y − y*, dL/dw = 0); while x <= alpha the network is a
// ReLU unit and only w moves. Row 0 is the initial state; row i is the state
// after i updates. The last row has updated = none.
std::vector<NeuronState> simulate_clipped_neuron(const NeuronSetup& setup);
// Same unit with plain ReLU (alpha = ∞).
std::vector<NeuronState> simulate_relu_neuron(const NeuronSetup& setup);

inline constexpr const char* kNeuronHeader = "step,w,alpha,x,y,loss,updated";
void write_neuron_csv(const std::vector<NeuronState>& traj, std::ostream& out);

// ---- clipping vs quantization error ----------------------------------------

struct ErrorCurvePoint {
  float alpha = 0.0f;
  double clip_mse = 0.0;   // mean over all samples of max(x − alpha, 0)²
  double quant_mse = 0.0;  // mean of (c − q(c))², c = clip(x, 0, alpha)
};

std::vector<ErrorCurvePoint> error_curves(const Tensor& samples, std::span<const float> alpha_grid, int bits);

inline constexpr const char* kErrorCurveHeader = "alpha,clip_mse,quant_mse";
void write_error_curves_csv(const std::vector<ErrorCurvePoint>& points, std::ostream& out);

// N(0, sigma²) pre-activation samples.
Tensor gaussian_activations(std::size_t n, float sigma, Rng rng);

// True when `v` is non-increasing (or non-decreasing) except for at most
// `tolerance` adjacent pairs.
bool monotone_within(std::span<const double> v, bool increasing, int tolerance);

// ---- fixed clipping level sweep --------------------------------------------

struct SweepRow {
  std::string label;  // "alpha=4" or "pact"
  float alpha = 0.0f; // fixed level, or the initial level of the trainable run
  bool trainable = false;
  double val_error = 0.0;
  double train_error = 0.0;
};

// One training run per fixed, non-trainable clipping level, then one run
// with trainable levels (the spec as given). Every run shares the base seed,
// so all see identical data order and initialization; runs are independent,
// so `workers` threads give the same rows as one.
std::vector<SweepRow> fixed_alpha_sweep(const ModelSpec& base, const TrainingConfig& cfg, const Dataset& train_set,
                                        const Dataset& val_set, std::span<const float> alphas,
                                        const sawb::CalibrationTable& calibration = sawb::default_table(),
                                        std::size_t workers = 1);

inline constexpr const char* kSweepHeader = "run,alpha,trainable,train_error,val_error";
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

}  // namespace qnn
