#include "qnn/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "qnn/error.hpp"

namespace qnn {

std::vector<int> TrainingConfig::scaled_milestones() const {
  std::vector<int> out;
  for (int m : lr_milestones) {
    out.push_back(static_cast<int>(std::lround(static_cast<double>(m) * max_epochs / reference_epochs)));
  }
  return out;
}

float TrainingConfig::lr_at(int epoch) const {
  float lr_now = lr;
  for (int m : scaled_milestones()) {
    if (epoch >= m) lr_now *= lr_decay;
  }
  return lr_now;
}

void TrainingConfig::validate() const {
  if (!(lr > 0.0f)) throw ParameterError("learning rate must be positive");
  if (batch_size == 0) throw ParameterError("batch_size must be positive");
  if (max_epochs < 1) throw ParameterError("max_epochs must be >= 1");
  if (reference_epochs < 1) throw ParameterError("reference_epochs must be >= 1");
  if (momentum < 0.0f || weight_decay < 0.0f) throw ParameterError("momentum and weight_decay must be >= 0");
  if (audit_every < 0) throw ParameterError("audit_every must be >= 0");
}

namespace {

std::size_t count_errors(const Tensor& logits, std::span<const int> labels) {
  const std::size_t c = logits.dim(1);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float* row = logits.data() + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    if (static_cast<int>(best) != labels[i]) ++wrong;
  }
  return wrong;
}

void optimizer_step(Model& model, const TrainingConfig& cfg, float lr) {
  for (auto& p : model.params()) {
    const float wd = p.kind == ParamKind::weight ? cfg.weight_decay : 0.0f;
    sgd_momentum_step(*p.param, lr, cfg.momentum, wd);
  }
  for (auto* a : model.activations()) a->clamp_alpha();
}

struct StepResult {
  float loss;
  Tensor logits;
};

StepResult run_step(Model& model, const TrainingConfig& cfg, const Tensor& images, std::span<const int> labels,
                    float lr, const std::string& where) {
  Tensor logits = model.forward(images, Mode::train);
  const LossAndGrad lg = softmax_cross_entropy(logits, labels);
  if (!std::isfinite(lg.loss)) {
    const auto layer = model.first_nonfinite_layer(images, Mode::eval);
    throw NumericError("non-finite loss" + where + "; first non-finite output at layer '" + layer.value_or("loss") +
                       "'");
  }
  model.backward(lg.grad);
  optimizer_step(model, cfg, lr);
  return {lg.loss, std::move(logits)};
}

}  // namespace

float train_step(Model& model, const TrainingConfig& cfg, const Tensor& images, std::span<const int> labels, float lr) {
  return run_step(model, cfg, images, labels, lr, "").loss;
}

AuditRecord audit_layer(const std::string& name, const Tensor& latent, const sawb::Quantizer& q, int grid_size) {
  AuditRecord r;
  r.layer = name;
  r.alpha_hat = q.scale_for(latent);
  const auto best = sawb::optimal_alpha_search(latent, q.n_bin(), grid_size);
  r.alpha_star = best.alpha_star;
  r.se_hat = sawb::quant_se(latent, sawb::quantize_weights(latent, r.alpha_hat, q.n_bin()));
  r.se_star = best.degenerate ? 0.0 : sawb::quant_se(latent, sawb::quantize_weights(latent, r.alpha_star, q.n_bin()));
  return r;
}

RunMetrics train(Model& model, const TrainingConfig& cfg, const Dataset& train_set, const Dataset* val_set) {
  cfg.validate();
  if (train_set.size() == 0) throw InputError("training set is empty");
  RunMetrics metrics;
  const Rng root(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  int step = 0;
  model.zero_grad();

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = root.split(2 * static_cast<std::uint64_t>(epoch) + 1);
    Rng augment_rng = root.split(2 * static_cast<std::uint64_t>(epoch) + 2);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    const float lr = cfg.lr_at(epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0, wrong = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      Tensor images = train_set.gather(idx);
      const std::vector<int> labels = train_set.gather_labels(idx);
      if (cfg.augment) augment_crop_flip(images, augment_rng);

      if (cfg.audit_every > 0 && step % cfg.audit_every == 0) {
        for (auto& [name, conv] : model.quantized_convs()) {
          AuditRecord r = audit_layer(name, conv->weight().value, *conv->quantizer(), cfg.audit_grid_size);
          r.epoch = epoch;
          r.step = step;
          metrics.audits.push_back(r);
        }
      }

      const StepResult r = run_step(model, cfg, images, labels, lr,
                                    " at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      loss_sum += static_cast<double>(r.loss) * labels.size();
      wrong += count_errors(r.logits, labels);
      seen += labels.size();
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_error = static_cast<double>(wrong) / static_cast<double>(seen);
    rec.val_error = val_set != nullptr ? evaluate(model, *val_set) : -1.0;
    metrics.epochs.push_back(rec);

    std::vector<NamedParam> params = model.params();
    for (const auto& p : params) {
      if (p.kind == ParamKind::alpha) metrics.alpha_trajectory[p.name].push_back(p.param->value[0]);
    }
  }
  return metrics;
}

double evaluate(Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t wrong = 0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t end = std::min(idx.size(), start + batch_size);
    const std::span<const std::size_t> part(idx.data() + start, end - start);
    const Tensor logits = model.forward(data.gather(part), Mode::eval);
    const std::vector<int> labels = data.gather_labels(part);
    wrong += count_errors(logits, labels);
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const RunMetrics& m, std::ostream& out) {
  out << kMetricsHeader << '\n';
  for (const auto& e : m.epochs) {
    out << e.epoch << ",train,loss,," << num(e.train_loss) << '\n';
    out << e.epoch << ",train,error,," << num(e.train_error) << '\n';
    if (e.val_error >= 0.0) out << e.epoch << ",val,error,," << num(e.val_error) << '\n';
    for (const auto& [layer, traj] : m.alpha_trajectory) {
      if (static_cast<std::size_t>(e.epoch) < traj.size()) {
        out << e.epoch << ",train,alpha," << layer << ',' << num(traj[static_cast<std::size_t>(e.epoch)]) << '\n';
      }
    }
  }
  for (const auto& a : m.audits) {
    out << a.epoch << ",audit,alpha_hat," << a.layer << ',' << num(a.alpha_hat) << '\n';
    out << a.epoch << ",audit,alpha_star," << a.layer << ',' << num(a.alpha_star) << '\n';
    out << a.epoch << ",audit,se_hat," << a.layer << ',' << num(a.se_hat) << '\n';
    out << a.epoch << ",audit,se_star," << a.layer << ',' << num(a.se_star) << '\n';
    out << a.epoch << ",audit,excess_se_pct," << a.layer << ',' << num(a.excess_se_pct()) << '\n';
  }
}

}  // namespace qnn
