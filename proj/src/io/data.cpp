#include "qnn/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "qnn/error.hpp"

namespace qnn {

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  Shape shape = images.shape();
  const std::size_t per = images.size() / shape[0];
  shape[0] = indices.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(out.data() + i * per, images.data() + indices[i] * per, per * sizeof(float));
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels[i]);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  return {gather(indices), gather_labels(indices), classes};
}

// ---- synthetic -------------------------------------------------------------

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

std::vector<Tensor> class_means(const SyntheticOptions& o, Rng rng) {
  std::vector<Tensor> means;
  const std::size_t g = std::max<std::size_t>(1, o.pattern_cells);
  for (std::size_t c = 0; c < o.classes; ++c) {
    Tensor coarse({o.channels, g, g});
    for (auto& v : coarse.values()) v = static_cast<float>(rng.normal());
    Tensor m({o.channels, o.height, o.width});
    for (std::size_t ch = 0; ch < o.channels; ++ch)
      for (std::size_t y = 0; y < o.height; ++y)
        for (std::size_t x = 0; x < o.width; ++x) {
          // bilinear upsampling of the coarse grid
          const double fy = (y + 0.5) * g / o.height - 0.5;
          const double fx = (x + 0.5) * g / o.width - 0.5;
          const double cy = std::clamp(fy, 0.0, static_cast<double>(g - 1));
          const double cx = std::clamp(fx, 0.0, static_cast<double>(g - 1));
          const std::size_t y0 = static_cast<std::size_t>(cy), x0 = static_cast<std::size_t>(cx);
          const std::size_t y1 = std::min(y0 + 1, g - 1), x1 = std::min(x0 + 1, g - 1);
          const double wy = cy - y0, wx = cx - x0;
          const auto at = [&](std::size_t yy, std::size_t xx) { return coarse[(ch * g + yy) * g + xx]; };
          const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                           wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
          m[(ch * o.height + y) * o.width + x] = static_cast<float>(v);
        }
    means.push_back(std::move(m));
  }
  return means;
}

Dataset draw_samples(const SyntheticOptions& o, const std::vector<Tensor>& means, std::size_t n, Rng rng) {
  if (o.classes == 0 || n < o.classes) throw ParameterError("gen_synthetic: need n >= classes >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  Dataset d{Tensor({n, o.channels, o.height, o.width}), std::vector<int>(n), o.classes};
  const std::size_t per = o.channels * o.height * o.width;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = order[i] % o.classes;
    d.labels[i] = static_cast<int>(label);
    float* dst = d.images.data() + i * per;
    for (std::size_t p = 0; p < per; ++p) dst[p] = means[label][p] + o.sigma * static_cast<float>(rng.normal());
  }
  return d;
}

}  // namespace

Dataset gen_synthetic(const SyntheticOptions& opts, Rng rng) {
  return draw_samples(opts, class_means(opts, rng.split(0)), opts.n, rng.split(1));
}

std::pair<Dataset, Dataset> gen_synthetic_split(const SyntheticOptions& opts, std::size_t n_train,
                                                std::size_t n_test, Rng rng) {
  const auto means = class_means(opts, rng.split(0));
  return {draw_samples(opts, means, n_train, rng.split(1)), draw_samples(opts, means, n_test, rng.split(2))};
}

// ---- CIFAR-10 --------------------------------------------------------------

Dataset read_cifar_batch(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR-10 batch " + file.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw IoError(file.string() + ": empty file");
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw IoError(file.string() + ": truncated record at byte offset " + std::to_string(n * kCifarRecordBytes) +
                  " (file has " + std::to_string(bytes.size()) + " bytes)");
  }
  Dataset d{Tensor({n, 3, 32, 32}), std::vector<int>(n), 10};
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw FormatError(file.string() + ": label byte " + std::to_string(rec[0]) + " at byte offset " +
                        std::to_string(r * kCifarRecordBytes));
    }
    d.labels[r] = rec[0];
    float* dst = d.images.data() + r * kCifarImageBytes;
    for (std::size_t p = 0; p < kCifarImageBytes; ++p) {
      const std::size_t ch = p / 1024;
      dst[p] = (static_cast<float>(rec[1 + p]) / 255.0f - kCifarMean[ch]) / kCifarStd[ch];
    }
  }
  return d;
}

namespace {

Dataset concat(const std::vector<Dataset>& parts) {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  Dataset out{Tensor({n, 3, 32, 32}), {}, 10};
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.images.values().begin(), p.images.values().end(), out.images.data() + off);
    off += p.images.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

}  // namespace

std::vector<std::size_t> stratified_indices(const std::vector<int>& labels, std::size_t classes, std::size_t count,
                                            Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t want = count / classes + (c < count % classes ? 1 : 0);
    if (want > by_class[c].size()) {
      throw InputError("subset of " + std::to_string(count) + " needs " + std::to_string(want) + " samples of class " +
                       std::to_string(c) + ", only " + std::to_string(by_class[c].size()) + " available");
    }
    shuffle(by_class[c], rng);
    out.insert(out.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir, const CifarOptions& opts, Rng rng) {
  std::vector<Dataset> parts;
  for (int b = 1; b <= 5; ++b) parts.push_back(read_cifar_batch(dir / ("data_batch_" + std::to_string(b) + ".bin")));
  Dataset train = concat(parts);
  Dataset test = read_cifar_batch(dir / "test_batch.bin");
  Rng sub = rng.split(0);
  if (opts.train_subset) train = train.subset(stratified_indices(train.labels, 10, *opts.train_subset, sub));
  Rng sub_test = rng.split(1);
  if (opts.test_subset) test = test.subset(stratified_indices(test.labels, 10, *opts.test_subset, sub_test));
  return {std::move(train), std::move(test)};
}

void augment_crop_flip(Tensor& batch, Rng& rng, std::size_t pad) {
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::vector<float> src(c * h * w);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t dy = rng.uniform_int(2 * pad + 1);
    const std::size_t dx = rng.uniform_int(2 * pad + 1);
    const bool flip = rng.uniform_int(2) == 1;
    float* img = batch.data() + i * c * h * w;
    std::copy(img, img + c * h * w, src.begin());
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t ox = flip ? w - 1 - x : x;
          // position in the padded image is (y + dy, ox + dx)
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(pad);
          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(ox + dx) - static_cast<std::ptrdiff_t>(pad);
          const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(h) &&
                              sx < static_cast<std::ptrdiff_t>(w);
          img[(ch * h + y) * w + x] = inside ? src[(ch * h + sy) * w + sx] : 0.0f;
        }
  }
}

}  // namespace qnn
