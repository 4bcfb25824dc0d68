#include "qnn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "qnn/calibration.hpp"
#include "qnn/checkpoint.hpp"
#include "qnn/config.hpp"
#include "qnn/error.hpp"
#include "qnn/experiments.hpp"
#include "qnn/sawb.hpp"
#include "qnn/train.hpp"

namespace qnn {
namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Shared by the commands that build a model from a run config.
struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> nbin;
  std::optional<int> bits;
  std::optional<std::size_t> subset;
  std::optional<int> epochs;
  std::optional<int> audit_every;
  std::string calibration;

  void add_to(CLI::App& app) {
    app.add_option("--config", config, "run config file (default: desk-scale task)")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "overrides training.seed");
    app.add_option("--nbin", nbin, "weight bins")->check(CLI::IsMember(std::vector<int>{2, 3, 4, 8, 16, 32}));
    app.add_option("--bits", bits, "activation bits")->check(CLI::Range(1, 30));
    app.add_option("--subset", subset, "training samples (cifar10 subset or synthetic count)")
        ->check(CLI::PositiveNumber);
    app.add_option("--epochs", epochs, "overrides training.max_epochs")->check(CLI::PositiveNumber);
    app.add_option("--calibration", calibration, "calibration table file")->check(CLI::ExistingFile);
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? desk_scale_config() : read_run_config(config);
    if (seed) cfg.training.seed = *seed;
    if (nbin) cfg.model.weight_n_bin = *nbin;
    if (bits) cfg.model.activation_bits = *bits;
    if (epochs) cfg.training.max_epochs = *epochs;
    if (audit_every) cfg.training.audit_every = *audit_every;
    if (subset) {
      if (cfg.data.source == "cifar10") {
        cfg.data.subset = *subset;
      } else {
        cfg.data.train_samples = *subset;
      }
    }
    if (!calibration.empty()) cfg.calibration_table = calibration;
    cfg.training.validate();
    return cfg;
  }
};

sawb::CalibrationTable table_for(const RunConfig& cfg) {
  return cfg.calibration_table.empty() ? sawb::default_table() : sawb::read_table(cfg.calibration_table);
}

// Builds the model and restores a checkpoint, using the calibration table
// stored in the checkpoint when it has one.
Model restore(const RunConfig& cfg, const fs::path& ckpt) {
  Model probe = build_model(cfg.model_spec(), cfg.training.seed, table_for(cfg));
  const sawb::CalibrationTable stored = load_checkpoint(ckpt, probe);
  if (stored.entries.empty()) return probe;
  Model m = build_model(cfg.model_spec(), cfg.training.seed, stored);
  load_checkpoint(ckpt, m);
  return m;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

// Empty path or "-" means stdout.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_file(path, text);
  }
}

std::vector<float> parse_list(const std::string& s) {
  std::vector<float> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stof(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ParameterError("not a number list: '" + s + "'");
    }
  }
  if (v.empty()) throw ParameterError("empty number list");
  return v;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-bit quantization-aware training toolkit", "qnn"};
  app.require_subcommand(1);
  app.fallthrough(false);

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "fit SAWB coefficients on the reference distributions");
  std::uint64_t cal_seed = 2018;
  std::vector<int> cal_bins;
  std::string cal_out;
  sawb::CalibrationOptions cal_opts;
  cal->add_option("--seed", cal_seed, "master seed");
  cal->add_option("--nbin", cal_bins, "bins to calibrate (repeatable; default all)")
      ->check(CLI::IsMember(std::vector<int>{2, 3, 4, 8, 16, 32}));
  cal->add_option("--samples", cal_opts.n_samples, "samples per distribution")->check(CLI::Range(10000, 100000000));
  cal->add_option("--grid", cal_opts.grid_size, "oracle grid size")->check(CLI::PositiveNumber);
  cal->add_option("--seeds-per-distribution", cal_opts.seeds_per_distribution)->check(CLI::PositiveNumber);
  cal->add_option("--out", cal_out, "output table file (default stdout)");

  // train
  auto* tr = app.add_subcommand("train", "train a model from a run config");
  RunFlags tr_flags;
  tr_flags.add_to(*tr);
  tr->add_option("--audit-every", tr_flags.audit_every, "oracle audit interval in steps (0 = off)")
      ->check(CLI::NonNegativeNumber);
  std::string tr_out;
  tr->add_option("--out", tr_out, "output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  RunFlags ev_flags;
  ev_flags.add_to(*ev);
  std::string ev_ckpt;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);

  // sweep-alpha
  auto* sw = app.add_subcommand("sweep-alpha", "fixed clipping levels against trainable PACT");
  RunFlags sw_flags;
  sw_flags.add_to(*sw);
  std::string sw_alphas = "1,2,4,8,16";
  std::size_t sw_jobs = 1;
  std::string sw_out;
  sw->add_option("--alphas", sw_alphas, "comma-separated fixed levels");
  sw->add_option("--jobs", sw_jobs, "parallel runs")->check(CLI::PositiveNumber);
  sw->add_option("--out", sw_out, "output directory")->required();

  // error-curves
  auto* ec = app.add_subcommand("error-curves", "clipping and quantization error over a clipping grid");
  std::uint64_t ec_seed = 1;
  std::size_t ec_samples = 100000;
  float ec_sigma = 2.0f;
  int ec_bits = 2;
  std::string ec_alphas = "0.5,1,2,4,8,16";
  std::string ec_out;
  ec->add_option("--seed", ec_seed);
  ec->add_option("--samples", ec_samples)->check(CLI::PositiveNumber);
  ec->add_option("--sigma", ec_sigma, "std of the Gaussian pre-activations")->check(CLI::PositiveNumber);
  ec->add_option("--bits", ec_bits)->check(CLI::Range(1, 30));
  ec->add_option("--alphas", ec_alphas, "comma-separated clipping grid");
  ec->add_option("--out", ec_out, "output CSV (default stdout)");

  // lemma31
  auto* lm = app.add_subcommand("lemma31", "single clipped-neuron SGD trajectory");
  NeuronSetup lm_setup;
  bool lm_relu = false;
  std::uint64_t lm_seed = 0;
  std::string lm_out;
  lm->add_option("--input", lm_setup.input, "input a");
  lm->add_option("--w0", lm_setup.w0, "initial weight");
  lm->add_option("--alpha0", lm_setup.alpha0, "initial clipping level");
  lm->add_option("--target", lm_setup.target, "target y*");
  lm->add_option("--eta", lm_setup.eta, "learning rate")->check(CLI::PositiveNumber);
  lm->add_option("--steps", lm_setup.steps)->check(CLI::NonNegativeNumber);
  lm->add_flag("--relu", lm_relu, "plain ReLU unit instead of the clipped one");
  lm->add_option("--seed", lm_seed, "accepted for uniformity; the simulation is deterministic");
  lm->add_option("--out", lm_out, "output CSV (default stdout)");

  // inspect-quant
  auto* iq = app.add_subcommand("inspect-quant", "per-layer weight quantization report");
  RunFlags iq_flags;
  iq_flags.add_to(*iq);
  std::string iq_ckpt;
  int iq_grid = sawb::kDefaultGridSize;
  std::string iq_out;
  iq->add_option("--checkpoint", iq_ckpt, "model checkpoint (default: freshly initialized model)")
      ->check(CLI::ExistingFile);
  iq->add_option("--grid", iq_grid, "oracle grid size")->check(CLI::PositiveNumber);
  iq->add_option("--out", iq_out, "output CSV (default stdout)");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "qnn: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (*cal) {
      std::vector<int> bins = cal_bins;
      if (bins.empty()) bins.assign(sawb::kSupportedBins.begin(), sawb::kSupportedBins.end());
      const sawb::CalibrationTable t = sawb::calibrate_table(bins, cal_seed, cal_opts);
      emit(cal_out, sawb::format_table(t), out);
    } else if (*tr) {
      const RunConfig cfg = tr_flags.resolve();
      const auto [train_set, test_set] = load_datasets(cfg.data, cfg.training.seed);
      const sawb::CalibrationTable table = table_for(cfg);
      Model model = build_model(cfg.model_spec(), cfg.training.seed, table);
      const RunMetrics m = train(model, cfg.training, train_set, &test_set);
      fs::create_directories(tr_out);
      std::ostringstream csv;
      write_metrics_csv(m, csv);
      write_file(fs::path(tr_out) / "metrics.csv", csv.str());
      write_file(fs::path(tr_out) / "run.cfg", serialize_run_config(cfg));
      save_checkpoint(fs::path(tr_out) / "model.ckpt", model, table);
      out << "final val_error=" << num(m.final_val_error()) << '\n';
    } else if (*ev) {
      const RunConfig cfg = ev_flags.resolve();
      const auto test_set = load_datasets(cfg.data, cfg.training.seed).second;
      Model model = restore(cfg, ev_ckpt);
      out << "val_error=" << num(evaluate(model, test_set)) << '\n';
    } else if (*sw) {
      const RunConfig cfg = sw_flags.resolve();
      const std::vector<float> alphas = parse_list(sw_alphas);
      const auto [train_set, test_set] = load_datasets(cfg.data, cfg.training.seed);
      const auto rows =
          fixed_alpha_sweep(cfg.model_spec(), cfg.training, train_set, test_set, alphas, table_for(cfg), sw_jobs);
      std::ostringstream csv;
      write_sweep_csv(rows, csv);
      write_file(fs::path(sw_out) / "sweep.csv", csv.str());
      out << csv.str();
    } else if (*ec) {
      const std::vector<float> grid = parse_list(ec_alphas);
      const Tensor x = gaussian_activations(ec_samples, ec_sigma, Rng(ec_seed));
      std::ostringstream csv;
      write_error_curves_csv(error_curves(x, grid, ec_bits), csv);
      emit(ec_out, csv.str(), out);
    } else if (*lm) {
      const auto traj = lm_relu ? simulate_relu_neuron(lm_setup) : simulate_clipped_neuron(lm_setup);
      std::ostringstream csv;
      write_neuron_csv(traj, csv);
      emit(lm_out, csv.str(), out);
    } else if (*iq) {
      const RunConfig cfg = iq_flags.resolve();
      Model model = iq_ckpt.empty() ? build_model(cfg.model_spec(), cfg.training.seed, table_for(cfg))
                                    : restore(cfg, iq_ckpt);
      std::ostringstream csv;
      csv << "layer,n_bin,numel,e_abs,e_sq,alpha_hat,alpha_star,se_hat,se_star,mse_hat,mse_star,excess_se_pct,"
             "histogram\n";
      for (const auto& [name, conv] : model.quantized_convs()) {
        const Tensor& w = conv->weight().value;
        const sawb::Quantizer& q = *conv->quantizer();
        const sawb::WeightStats st = sawb::weight_stats(w);
        const AuditRecord a = audit_layer(name, w, q, iq_grid);
        const Tensor wq = sawb::quantize_weights(w, a.alpha_hat, q.n_bin());
        const std::vector<float> levels = sawb::bin_levels(q.n_bin(), a.alpha_hat);
        std::vector<std::size_t> hist(levels.size(), 0);
        for (float v : wq.values()) {
          ++hist[static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), v) - levels.begin())];
        }
        const double n = static_cast<double>(w.size());
        csv << name << ',' << q.n_bin() << ',' << w.size() << ',' << num(st.e_abs) << ',' << num(st.e_sq) << ','
            << num(a.alpha_hat) << ',' << num(a.alpha_star) << ',' << num(a.se_hat) << ',' << num(a.se_star) << ','
            << num(a.se_hat / n) << ',' << num(a.se_star / n) << ',' << num(a.excess_se_pct()) << ',';
        for (std::size_t i = 0; i < hist.size(); ++i) csv << (i ? ";" : "") << hist[i];
        csv << '\n';
      }
      emit(iq_out, csv.str(), out);
    }
  } catch (const std::exception& e) {
    err << "qnn: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int run_command(const std::vector<std::string>& args) { return run_command(args, std::cout, std::cerr); }

}  // namespace qnn
