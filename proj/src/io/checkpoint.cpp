#include "qnn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "qnn/error.hpp"

namespace qnn {
namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::vector<char>& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte offset " +
                        std::to_string(pos_));
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
  }
  std::uint16_t u16(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(2, what));
    return static_cast<std::uint16_t>(p[0] | p[1] << 8);
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(*take(1, what)); }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_checkpoint(const std::vector<NamedTensorValue>& tensors) {
  std::vector<char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw FormatError("tensor name too long: " + name.substr(0, 64));
    if (t.ndim() > 0xFF) throw FormatError("too many dimensions in " + name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<char>(t.ndim()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<NamedTensorValue> decode_checkpoint(const std::vector<char>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(8, "magic"), kCheckpointMagic, 8) != 0) throw FormatError("not a checkpoint: bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32("tensor count");
  std::vector<NamedTensorValue> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16("name length");
    const char* name = r.take(len, "name");
    const std::uint8_t ndim = r.u8("ndim");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      shape.push_back(r.u32("dims"));
      numel *= shape.back();
    }
    if (ndim == 0 || numel == 0) throw FormatError("checkpoint tensor '" + std::string(name, len) + "' is empty");
    if ((bytes.size() - r.pos()) / 4 < numel) {
      throw FormatError("checkpoint truncated in payload of '" + std::string(name, len) + "'");
    }
    std::vector<float> data(numel);
    for (auto& v : data) v = std::bit_cast<float>(r.u32("payload"));
    out.push_back({std::string(name, len), Tensor(std::move(shape), std::move(data))});
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint at offset " + std::to_string(r.pos()));
  return out;
}

std::vector<NamedTensorValue> model_state(Model& model, const sawb::CalibrationTable& calibration) {
  std::vector<NamedTensorValue> out;
  for (const auto& p : model.params()) out.push_back({p.name, p.param->value});
  for (const auto& b : model.buffers()) out.push_back({b.name, *b.tensor});
  if (!calibration.entries.empty()) {
    Tensor rows({calibration.entries.size(), 5});
    std::size_t i = 0;
    for (const auto& [n_bin, e] : calibration.entries) {
      rows[i * 5 + 0] = static_cast<float>(n_bin);
      rows[i * 5 + 1] = e.coeffs.c1;
      rows[i * 5 + 2] = e.coeffs.c2;
      rows[i * 5 + 3] = static_cast<float>(e.residual_max);
      rows[i * 5 + 4] = static_cast<float>(e.r_squared);
      ++i;
    }
    out.push_back({kCalibrationTensorName, std::move(rows)});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, Model& model, const sawb::CalibrationTable& calibration) {
  const std::vector<char> bytes = encode_checkpoint(model_state(model, calibration));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

sawb::CalibrationTable load_checkpoint(const std::filesystem::path& path, Model& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::vector<NamedTensorValue> stored = decode_checkpoint(bytes);

  std::map<std::string, Tensor*> targets;
  for (const auto& p : model.params()) targets[p.name] = &p.param->value;
  for (const auto& b : model.buffers()) targets[b.name] = b.tensor;

  std::vector<std::string> unknown, mismatched;
  std::map<std::string, const Tensor*> found;
  sawb::CalibrationTable table;
  for (const auto& [name, t] : stored) {
    if (name == kCalibrationTensorName) {
      if (t.ndim() != 2 || t.dim(1) != 5) throw FormatError("malformed calibration tensor in checkpoint");
      for (std::size_t i = 0; i < t.dim(0); ++i) {
        sawb::CalibrationEntry e;
        e.n_bin = static_cast<int>(t[i * 5]);
        e.coeffs = {t[i * 5 + 1], t[i * 5 + 2]};
        e.residual_max = t[i * 5 + 3];
        e.r_squared = t[i * 5 + 4];
        table.entries[e.n_bin] = e;
      }
      continue;
    }
    const auto it = targets.find(name);
    if (it == targets.end()) {
      unknown.push_back(name);
    } else if (it->second->shape() != t.shape()) {
      mismatched.push_back(name + " " + shape_str(t.shape()) + " vs model " + shape_str(it->second->shape()));
    } else {
      found[name] = &t;
    }
  }
  std::vector<std::string> missing;
  for (const auto& [name, _] : targets) {
    const bool stored_here = std::any_of(stored.begin(), stored.end(), [&](const auto& s) { return s.name == name; });
    if (!stored_here) missing.push_back(name);
  }
  if (!unknown.empty() || !mismatched.empty() || !missing.empty()) {
    std::string msg = "checkpoint " + path.string() + " does not match the model";
    const auto list = [&msg](const char* what, const std::vector<std::string>& names) {
      if (names.empty()) return;
      msg += std::string("; ") + what + ":";
      for (const auto& n : names) msg += " " + n;
    };
    list("shape mismatch", mismatched);
    list("not in model", unknown);
    list("missing from checkpoint", missing);
    throw CompatibilityError(msg);
  }
  for (const auto& [name, t] : found) *targets[name] = *t;
  return table;
}

}  // namespace qnn
