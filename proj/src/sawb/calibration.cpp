#include "qnn/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qnn/distributions.hpp"
#include "qnn/error.hpp"

namespace qnn::sawb {

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw CalibrationError("fit_line: need at least two paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw CalibrationError("fit_line: singular regression (all ratio values equal)");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += r * r;
    fit.residual_max = std::max(fit.residual_max, std::fabs(r));
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

CalibrationEntry calibrate_coefficients(int n_bin, Rng rng, const CalibrationOptions& opts) {
  require_supported(n_bin);
  if (opts.n_samples < 10000) throw ParameterError("calibration needs at least 10^4 samples per distribution");
  if (opts.seeds_per_distribution < 1) throw ParameterError("seeds_per_distribution must be >= 1");

  CalibrationEntry entry;
  entry.n_bin = n_bin;
  std::vector<double> xs, ys;
  for (std::size_t d = 0; d < kReferenceDistributions.size(); ++d) {
    for (int r = 0; r < opts.seeds_per_distribution; ++r) {
      Rng stream = rng.split(d * 1000 + static_cast<std::uint64_t>(r));
      const Tensor w = sample_distribution(kReferenceDistributions[d], opts.n_samples, stream);
      const WeightStats stats = weight_stats(w);
      const SearchResult best = optimal_alpha_search(w, n_bin, opts.grid_size);
      const double e_abs = stats.e_abs;
      CalibrationPoint p{std::string(name(kReferenceDistributions[d])), std::sqrt(static_cast<double>(stats.e_sq)) / e_abs,
                         best.alpha_star / e_abs};
      xs.push_back(p.ratio);
      ys.push_back(p.scaled_alpha);
      entry.points.push_back(std::move(p));
    }
  }
  const LineFit fit = fit_line(xs, ys);
  entry.coeffs = {static_cast<float>(fit.slope), static_cast<float>(fit.intercept)};
  entry.residual_max = fit.residual_max;
  entry.r_squared = fit.r_squared;
  return entry;
}

Coefficients CalibrationTable::coefficients(int n_bin) const {
  const auto it = entries.find(n_bin);
  if (it == entries.end()) throw CalibrationError("no calibration entry for n_bin " + std::to_string(n_bin));
  return it->second.coeffs;
}

CalibrationTable calibrate_table(std::span<const int> n_bins, std::uint64_t seed, const CalibrationOptions& opts) {
  CalibrationTable table;
  table.seed = seed;
  table.n_samples = opts.n_samples;
  table.seeds_per_distribution = opts.seeds_per_distribution;
  const Rng root(seed);
  for (int n_bin : n_bins) {
    table.entries[n_bin] = calibrate_coefficients(n_bin, root.split(static_cast<std::uint64_t>(n_bin)), opts);
  }
  return table;
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::string format_table(const CalibrationTable& table) {
  std::ostringstream os;
  os << "# qnn SAWB calibration table\n";
  os << "# distributions=" << table.distribution_set << "\n";
  os << "# seed=" << table.seed << "\n";
  os << "# samples=" << table.n_samples << "\n";
  os << "# seeds_per_distribution=" << table.seeds_per_distribution << "\n";
  os << "n_bin,c1,c2,residual_max,r_squared\n";
  for (const auto& [n_bin, e] : table.entries) {
    os << n_bin << ',' << fmt("%.9g", e.coeffs.c1) << ',' << fmt("%.9g", e.coeffs.c2) << ','
       << fmt("%.17g", e.residual_max) << ',' << fmt("%.17g", e.r_squared) << '\n';
  }
  return os.str();
}

CalibrationTable parse_table(const std::string& text) {
  CalibrationTable table;
  std::istringstream is(text);
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      const std::string value = line.substr(eq + 1);
      try {
        if (key == "seed") table.seed = std::stoull(value);
        else if (key == "samples") table.n_samples = std::stoull(value);
        else if (key == "seeds_per_distribution") table.seeds_per_distribution = std::stoi(value);
        else if (key == "distributions") table.distribution_set = value;
      } catch (const std::exception&) {
        throw FormatError("calibration table line " + std::to_string(line_no) + ": bad value for " + key);
      }
      continue;
    }
    if (!header_seen) {
      if (line != "n_bin,c1,c2,residual_max,r_squared") {
        throw FormatError("calibration table line " + std::to_string(line_no) + ": expected header row");
      }
      header_seen = true;
      continue;
    }
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw FormatError("calibration table line " + std::to_string(line_no) + ": expected 5 fields");
    }
    CalibrationEntry e;
    try {
      e.n_bin = std::stoi(fields[0]);
      e.coeffs = {std::stof(fields[1]), std::stof(fields[2])};
      e.residual_max = std::stod(fields[3]);
      e.r_squared = std::stod(fields[4]);
    } catch (const std::exception&) {
      throw FormatError("calibration table line " + std::to_string(line_no) + ": malformed number");
    }
    if (!is_supported(e.n_bin)) {
      throw FormatError("calibration table line " + std::to_string(line_no) + ": unsupported n_bin " + fields[0]);
    }
    if (table.entries.count(e.n_bin) != 0) {
      throw FormatError("calibration table: duplicate entry for n_bin " + fields[0]);
    }
    table.entries[e.n_bin] = e;
  }
  if (!header_seen) throw FormatError("calibration table: missing header row");
  return table;
}

void write_table(const CalibrationTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << format_table(table);
  if (!out) throw IoError("failed writing " + path.string());
}

CalibrationTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open calibration table " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_table(ss.str());
}

const CalibrationTable& default_table() {
  static const CalibrationTable table = [] {
    CalibrationTable t;
    t.seed = 2018;
    t.n_samples = 100000;
    // generated by: qnn calibrate --seed 2018
    const struct {
      int n_bin;
      float c1, c2;
      double residual_max, r_squared;
    } rows[] = {
        {2, 0.00660568569f, 0.991920412f, 0.00097333387047604525, 0.49802246253535709},
        {3, 2.57436299f, -1.67307746f, 0.044270972426585287, 0.97252581464796328},
        {4, 3.13496542f, -2.07769132f, 0.045391202487631954, 0.9804840224495982},
        {8, 7.38132668f, -6.72494316f, 0.099606428715810935, 0.98248200469297986},
        {16, 11.835906f, -11.7487087f, 0.24203666196200757, 0.96921480338590749},
        {32, 17.1670151f, -17.8554726f, 0.53719903593088247, 0.94247654622971699},
    };
    for (const auto& r : rows) t.entries[r.n_bin] = CalibrationEntry{r.n_bin, {r.c1, r.c2}, r.residual_max, r.r_squared, {}};
    return t;
  }();
  return table;
}

}  // namespace qnn::sawb
