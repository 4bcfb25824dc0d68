#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "qnn/data.hpp"
#include "qnn/model.hpp"

namespace qnn {

struct TrainingConfig {
  float lr = 0.1f;
  // Epochs (out of reference_epochs) at which lr is multiplied by lr_decay.
  // With a different max_epochs they scale proportionally: 60/120 of 200
  // become 12/24 of 40.
  std::vector<int> lr_milestones{60, 120};
  int reference_epochs = 200;
  float lr_decay = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 2e-4f;
  std::size_t batch_size = 128;
  int max_epochs = 200;
  std::uint64_t seed = 1;
  bool augment = false;
  // Run the exhaustive scale search on every quantized conv every N steps; 0 = off.
  int audit_every = 0;
  int audit_grid_size = sawb::kDefaultGridSize;

  bool operator==(const TrainingConfig&) const = default;

  std::vector<int> scaled_milestones() const;
  float lr_at(int epoch) const;
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_error = 0.0;
  double val_error = 0.0;  // negative when no validation set was given
};

struct AuditRecord {
  int epoch = 0;
  int step = 0;
  std::string layer;
  float alpha_hat = 0.0f;
  float alpha_star = 0.0f;
  double se_hat = 0.0;
  double se_star = 0.0;
  double excess_se_pct() const { return se_star > 0.0 ? 100.0 * (se_hat / se_star - 1.0) : 0.0; }
};

struct RunMetrics {
  std::vector<EpochRecord> epochs;
  // Clipping level of every activation layer at the end of each epoch.
  std::map<std::string, std::vector<float>> alpha_trajectory;
  std::vector<AuditRecord> audits;

  double final_val_error() const { return epochs.empty() ? -1.0 : epochs.back().val_error; }
};

// CSV with header `epoch,split,metric,layer,value`.
void write_metrics_csv(const RunMetrics& m, std::ostream& out);
inline constexpr const char* kMetricsHeader = "epoch,split,metric,layer,value";

// Minibatch SGD with momentum. Every step recomputes the SAWB scale of each
// quantized layer from its current latent weights (inside the forward pass),
// runs the straight-through backward, applies weight decay to conv/dense
// weights only, adds the alpha regularizer, steps, and clamps alpha.
RunMetrics train(Model& model, const TrainingConfig& cfg, const Dataset& train_set, const Dataset* val_set = nullptr);

// One SGD step on the given batch; returns the loss. Exposed for tests.
float train_step(Model& model, const TrainingConfig& cfg, const Tensor& images, std::span<const int> labels, float lr);

// Top-1 error in eval mode.
double evaluate(Model& model, const Dataset& data, std::size_t batch_size = 256);

// Squared error of the SAWB estimate and of the exhaustive optimum for one layer.
AuditRecord audit_layer(const std::string& name, const Tensor& latent, const sawb::Quantizer& q,
                        int grid_size = sawb::kDefaultGridSize);

}  // namespace qnn
