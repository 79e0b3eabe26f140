#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctc/error.h"

namespace ctc {

// Channel-major C x H x W extent of a latent tensor.
struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(height) * width;
  }
  std::size_t index(int c, int h, int w) const {
    return (static_cast<std::size_t>(c) * height + h) * width + w;
  }
  bool valid() const { return channels > 0 && height > 0 && width > 0; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{})
      : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require(data_.size() == shape_.size(), ErrorKind::kInvalidArgument,
            "tensor data does not match its shape");
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(int c, int h, int w) { return data_[shape_.index(c, h, w)]; }
  const T& at(int c, int h, int w) const { return data_[shape_.index(c, h, w)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& vector() const { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using RealTensor = Tensor<double>;
using IntTensor = Tensor<std::int32_t>;

// Probabilities or values attached to the three trit outcomes 0, 1, 2.
using Triple = std::array<double, 3>;

}  // namespace ctc
