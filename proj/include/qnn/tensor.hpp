#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace qnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f32 array. The last index varies fastest.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }
  static Tensor scalar(float v) { return Tensor({1}, std::vector<float>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessor for N×C×H×W tensors.
  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Same buffer, new shape; the element count must match.
  Tensor reshaped(Shape shape) const;
  void fill(float v);

  bool all_finite() const;
  // Throws NumericError naming `what` if any element is NaN or Inf.
  void check_finite(const std::string& what) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// A trainable tensor with its gradient and momentum buffer.
struct Param {
  Param() = default;
  explicit Param(Tensor init)
      : value(std::move(init)), grad(Tensor::zeros_like(value)), velocity(Tensor::zeros_like(value)) {}

  Tensor value;
  Tensor grad;
  Tensor velocity;

  void zero_grad() { grad.fill(0.0f); }
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace qnn
