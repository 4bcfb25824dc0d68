#include "qnn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "qnn/error.hpp"

namespace qnn {

ModelSpec RunConfig::model_spec() const {
  ResNetOptions o = model;
  o.input_channels = data.channels;
  o.input_size = data.source == "cifar10" ? 32 : data.image_size;
  o.classes = data.classes;
  return preact_resnet_spec(o);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that reads back to the same float.
std::string fmt_float(float v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& v, const std::string& key) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw FormatError("config: bad value '" + v + "' for " + key);
  return out;
}

float parse_float(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const float f = std::stof(v, &pos);
    if (pos != v.size()) throw FormatError("");
    return f;
  } catch (const std::exception&) {
    throw FormatError("config: bad value '" + v + "' for " + key);
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw FormatError("config: bad boolean '" + v + "' for " + key);
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<int>(item, key));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// One entry per key: how to read it into a RunConfig and how to print it.
struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Schema = std::vector<std::pair<std::string, std::vector<std::pair<std::string, Field>>>>;

#define QNN_SIZE(expr) \
  Field { [](RunConfig& c, const std::string& v, const std::string& k) { expr = parse_number<std::size_t>(v, k); }, \
          [](const RunConfig& c) { return std::to_string(expr); } }
#define QNN_INT(expr) \
  Field { [](RunConfig& c, const std::string& v, const std::string& k) { expr = parse_number<int>(v, k); }, \
          [](const RunConfig& c) { return std::to_string(expr); } }
#define QNN_U64(expr) \
  Field { [](RunConfig& c, const std::string& v, const std::string& k) { expr = parse_number<std::uint64_t>(v, k); }, \
          [](const RunConfig& c) { return std::to_string(expr); } }
#define QNN_FLOAT(expr) \
  Field { [](RunConfig& c, const std::string& v, const std::string& k) { expr = parse_float(v, k); }, \
          [](const RunConfig& c) { return fmt_float(expr); } }
#define QNN_BOOL(expr) \
  Field { [](RunConfig& c, const std::string& v, const std::string& k) { expr = parse_bool(v, k); }, \
          [](const RunConfig& c) { return std::string(expr ? "true" : "false"); } }
#define QNN_STRING(expr) \
  Field { [](RunConfig& c, const std::string& v, const std::string&) { expr = v; }, \
          [](const RunConfig& c) { return expr; } }

const Schema& schema() {
  static const Schema s = {
      {"model",
       {
           {"name", QNN_STRING(c.name)},
           {"blocks_per_stage", QNN_SIZE(c.model.blocks_per_stage)},
           {"base_channels", QNN_SIZE(c.model.base_channels)},
           {"width_multiplier", QNN_FLOAT(c.model.width_multiplier)},
       }},
      {"training",
       {
           {"lr", QNN_FLOAT(c.training.lr)},
           {"lr_milestones",
            Field{[](RunConfig& c, const std::string& v, const std::string& k) {
                    c.training.lr_milestones = parse_int_list(v, k);
                  },
                  [](const RunConfig& c) { return join(c.training.lr_milestones); }}},
           {"reference_epochs", QNN_INT(c.training.reference_epochs)},
           {"lr_decay", QNN_FLOAT(c.training.lr_decay)},
           {"momentum", QNN_FLOAT(c.training.momentum)},
           {"weight_decay", QNN_FLOAT(c.training.weight_decay)},
           {"batch_size", QNN_SIZE(c.training.batch_size)},
           {"epochs", QNN_INT(c.training.max_epochs)},
           {"seed", QNN_U64(c.training.seed)},
           {"augment", QNN_BOOL(c.training.augment)},
           {"audit_every", QNN_INT(c.training.audit_every)},
       }},
      {"quantization",
       {
           {"activation_bits", QNN_INT(c.model.activation_bits)},
           {"weight_nbin", QNN_INT(c.model.weight_n_bin)},
           {"full_precision_shortcut", QNN_BOOL(c.model.full_precision_shortcut)},
           {"alpha_init", QNN_FLOAT(c.model.alpha_init)},
           {"alpha_reg_lambda", QNN_FLOAT(c.model.reg_lambda)},
           {"alpha_trainable", QNN_BOOL(c.model.alpha_trainable)},
           {"calibration_table", QNN_STRING(c.calibration_table)},
       }},
      {"data",
       {
           {"source", QNN_STRING(c.data.source)},
           {"cifar_dir", QNN_STRING(c.data.cifar_dir)},
           {"subset", QNN_SIZE(c.data.subset)},
           {"test_subset", QNN_SIZE(c.data.test_subset)},
           {"train_samples", QNN_SIZE(c.data.train_samples)},
           {"test_samples", QNN_SIZE(c.data.test_samples)},
           {"classes", QNN_SIZE(c.data.classes)},
           {"image_size", QNN_SIZE(c.data.image_size)},
           {"channels", QNN_SIZE(c.data.channels)},
           {"sigma", QNN_FLOAT(c.data.sigma)},
           {"pattern_cells", QNN_SIZE(c.data.pattern_cells)},
       }},
  };
  return s;
}

#undef QNN_SIZE
#undef QNN_INT
#undef QNN_U64
#undef QNN_FLOAT
#undef QNN_BOOL
#undef QNN_STRING

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& [sec, fields] : schema()) {
    if (sec != section) continue;
    for (const auto& [k, f] : fields) {
      if (k == key) return &f;
    }
  }
  return nullptr;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  std::set<std::string> seen;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') throw FormatError(where + "malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      bool known = false;
      for (const auto& [sec, fields] : schema()) known = known || sec == section;
      if (!known) throw FormatError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError(where + "expected 'key = value'");
    if (section.empty()) throw FormatError(where + "key outside of a section");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const Field* f = find_field(section, key);
    if (f == nullptr) throw FormatError(where + "unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second) throw FormatError(where + "duplicate key '" + key + "'");
    f->set(cfg, value, section + "." + key);
  }
  return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [sec, fields] : schema()) {
    if (!first) os << '\n';
    first = false;
    os << '[' << sec << "]\n";
    for (const auto& [k, f] : fields) os << k << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

RunConfig desk_scale_config() {
  RunConfig c;
  c.name = "desk-scale";
  c.model.blocks_per_stage = 1;
  c.model.base_channels = 8;
  c.training.max_epochs = 40;
  c.model.activation_bits = 2;
  c.model.weight_n_bin = 4;
  // short schedule, stronger pull on alpha
  c.model.reg_lambda = 2e-3f;
  c.data.train_samples = 5000;
  c.data.test_samples = 1000;
  c.data.sigma = 3.0f;
  return c;
}

std::pair<Dataset, Dataset> load_datasets(const DataConfig& data, std::uint64_t seed) {
  const Rng rng = Rng(seed).split(0xDA7A);
  if (data.source == "synthetic") {
    SyntheticOptions o;
    o.classes = data.classes;
    o.channels = data.channels;
    o.height = o.width = data.image_size;
    o.sigma = data.sigma;
    o.pattern_cells = data.pattern_cells;
    return gen_synthetic_split(o, data.train_samples, data.test_samples, rng);
  }
  if (data.source == "cifar10") {
    if (data.cifar_dir.empty()) throw ParameterError("data.cifar_dir is required for the cifar10 source");
    CifarOptions o;
    if (data.subset != 0) o.train_subset = data.subset;
    if (data.test_subset != 0) o.test_subset = data.test_subset;
    return load_cifar10(data.cifar_dir, o, rng);
  }
  throw ParameterError("unknown data source '" + data.source + "'");
}

}  // namespace qnn
