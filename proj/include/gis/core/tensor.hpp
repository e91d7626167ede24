#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gis/core/error.hpp"

namespace gis {

struct Shape4 {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape4&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense NCHW tensor with value semantics. Images are stored planar
// (channel-major), so an H x W x 3 RGB image is a (1, 3, H, W) tensor.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : shape_{n, c, h, w}, data_(shape_.size(), fill) {}
  explicit Tensor(Shape4 s, T fill = T(0)) : shape_(s), data_(s.size(), fill) {}
  Tensor(const Tensor&) = default;
  Tensor& operator=(const Tensor&) = default;
  // A moved-from tensor is empty, shape included.
  Tensor(Tensor&& o) noexcept : shape_(std::exchange(o.shape_, {})), data_(std::move(o.data_)) {}
  Tensor& operator=(Tensor&& o) noexcept {
    shape_ = std::exchange(o.shape_, {});
    data_ = std::move(o.data_);
    o.data_.clear();
    return *this;
  }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(shape_.h) * shape_.w;
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }

  T* plane(int n, int c) {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * plane_size();
  }
  const T* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * plane_size();
  }
  // Start of sample n (all channels).
  T* sample(int n) { return plane(n, 0); }
  const T* sample(int n) const { return plane(n, 0); }

  T& operator()(int n, int c, int y, int x) {
    assert(n < shape_.n && c < shape_.c && y < shape_.h && x < shape_.w);
    return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x];
  }
  const T& operator()(int n, int c, int y, int x) const {
    assert(n < shape_.n && c < shape_.c && y < shape_.h && x < shape_.w);
    return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void resize(Shape4 s) {
    shape_ = s;
    data_.assign(s.size(), T(0));
  }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  bool operator==(const Tensor&) const = default;

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  Tensor<To> out(src.shape());
  std::transform(src.data(), src.data() + src.size(), out.data(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

inline void require_shape(const Shape4& got, const Shape4& want, const char* what) {
  if (!(got == want)) {
    throw ShapeError(std::string(what) + ": expected shape " + want.str() +
                     ", got " + got.str());
  }
}

// Channels [c0, c0 + count) of every sample.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& src, int c0, int count) {
  Tensor<T> out(src.n(), count, src.h(), src.w());
  for (int n = 0; n < src.n(); ++n) {
    std::copy_n(src.plane(n, c0), count * src.plane_size(), out.plane(n, 0));
  }
  return out;
}

// Sample n as a batch of one.
template <class T>
Tensor<T> slice_sample(const Tensor<T>& src, int n) {
  Tensor<T> out(1, src.c(), src.h(), src.w());
  std::copy_n(src.sample(n), out.size(), out.data());
  return out;
}

}  // namespace gis
