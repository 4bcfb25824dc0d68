#include "qnn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <thread>

#include "qnn/error.hpp"
#include "qnn/pact.hpp"

namespace qnn {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<NeuronState> simulate(const NeuronSetup& s, bool clipped) {
  if (!(s.eta > 0.0f)) throw ParameterError("learning rate must be positive");
  if (s.steps < 0) throw ParameterError("steps must be >= 0");
  std::vector<NeuronState> traj;
  traj.reserve(static_cast<std::size_t>(s.steps) + 1);
  float w = s.w0;
  float alpha = clipped ? s.alpha0 : std::numeric_limits<float>::infinity();
  for (int t = 0;; ++t) {
    NeuronState st;
    st.step = t;
    st.w = w;
    st.alpha = alpha;
    st.x = w * s.input;
    st.y = st.x > alpha ? alpha : std::max(st.x, 0.0f);
    const float dl_dy = st.y - s.target;
    st.loss = 0.5f * dl_dy * dl_dy;
    if (t == s.steps) {
      traj.push_back(st);
      break;
    }
    if (st.x > alpha) {
      alpha -= s.eta * dl_dy;
      st.updated = UpdatedParam::alpha;
    } else {
      const float dy_dx = st.x >= 0.0f ? 1.0f : 0.0f;
      w -= s.eta * dl_dy * dy_dx * s.input;
      st.updated = UpdatedParam::weight;
    }
    traj.push_back(st);
  }
  return traj;
}

}  // namespace

std::vector<NeuronState> simulate_clipped_neuron(const NeuronSetup& setup) { return simulate(setup, true); }

std::vector<NeuronState> simulate_relu_neuron(const NeuronSetup& setup) { return simulate(setup, false); }

void write_neuron_csv(const std::vector<NeuronState>& traj, std::ostream& out) {
  out << kNeuronHeader << '\n';
  for (const auto& s : traj) {
    const char* what = s.updated == UpdatedParam::alpha ? "alpha" : s.updated == UpdatedParam::weight ? "w" : "";
    out << s.step << ',' << num(s.w) << ',' << num(s.alpha) << ',' << num(s.x) << ',' << num(s.y) << ','
        << num(s.loss) << ',' << what << '\n';
  }
}

std::vector<ErrorCurvePoint> error_curves(const Tensor& samples, std::span<const float> alpha_grid, int bits) {
  if (samples.empty()) throw InputError("error_curves: no samples");
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    if (!(alpha_grid[i] > 0.0f) || (i > 0 && !(alpha_grid[i] > alpha_grid[i - 1]))) {
      throw ParameterError("error_curves: alpha grid must be positive and strictly ascending");
    }
  }
  const double n = static_cast<double>(samples.size());
  std::vector<ErrorCurvePoint> out;
  for (float alpha : alpha_grid) {
    ErrorCurvePoint p;
    p.alpha = alpha;
    double clip_sum = 0.0;
    for (float x : samples.values()) {
      const double over = std::max(static_cast<double>(x) - alpha, 0.0);
      clip_sum += over * over;
    }
    p.clip_mse = clip_sum / n;
    const Tensor clipped = pact::forward(samples, alpha);
    const Tensor q = pact::quantize(clipped, alpha, bits);
    double q_sum = 0.0;
    for (std::size_t i = 0; i < clipped.size(); ++i) {
      const double d = static_cast<double>(clipped[i]) - q[i];
      q_sum += d * d;
    }
    p.quant_mse = q_sum / n;
    out.push_back(p);
  }
  return out;
}

void write_error_curves_csv(const std::vector<ErrorCurvePoint>& points, std::ostream& out) {
  out << kErrorCurveHeader << '\n';
  for (const auto& p : points) out << num(p.alpha) << ',' << num(p.clip_mse) << ',' << num(p.quant_mse) << '\n';
}

Tensor gaussian_activations(std::size_t n, float sigma, Rng rng) {
  Tensor t({n});
  for (auto& v : t.values()) v = static_cast<float>(sigma * rng.normal());
  return t;
}

bool monotone_within(std::span<const double> v, bool increasing, int tolerance) {
  int violations = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const bool bad = increasing ? v[i] < v[i - 1] : v[i] > v[i - 1];
    if (bad) ++violations;
  }
  return violations <= tolerance;
}

std::vector<SweepRow> fixed_alpha_sweep(const ModelSpec& base, const TrainingConfig& cfg, const Dataset& train_set,
                                        const Dataset& val_set, std::span<const float> alphas,
                                        const sawb::CalibrationTable& calibration, std::size_t workers) {
  if (alphas.empty()) throw ParameterError("fixed_alpha_sweep: no clipping levels given");
  float init = 0.0f;
  for (const auto& l : base.layers) {
    if (l.kind == LayerKind::pact || l.kind == LayerKind::residual_block) init = l.alpha_init;
  }
  // Row i < alphas.size() is a fixed level; the last row is the trainable run.
  std::vector<SweepRow> rows(alphas.size() + 1);
  const auto run = [&](std::size_t i) {
    const bool trainable = i == alphas.size();
    const ModelSpec spec = trainable ? base : with_fixed_alpha(base, alphas[i]);
    Model m = build_model(spec, cfg.seed, calibration);
    const RunMetrics r = train(m, cfg, train_set, &val_set);
    rows[i] = trainable ? SweepRow{"pact", init, true, r.final_val_error(), r.epochs.back().train_error}
                        : SweepRow{"alpha=" + num(alphas[i]), alphas[i], false, r.final_val_error(),
                                   r.epochs.back().train_error};
  };

  workers = std::clamp<std::size_t>(workers, 1, rows.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < rows.size(); ++i) run(i);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(rows.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
          try {
            run(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << kSweepHeader << '\n';
  for (const auto& r : rows) {
    out << r.label << ',' << num(r.alpha) << ',' << (r.trainable ? 1 : 0) << ',' << num(r.train_error) << ','
        << num(r.val_error) << '\n';
  }
}

}  // namespace qnn
