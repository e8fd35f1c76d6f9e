#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace semgan {

// Dense C-contiguous numeric array with up to 4 dimensions. This is the one
// carrier type shared by images, logit maps, network activations and
// parameters; all heavy math happens through Eigen maps over data().
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), T(0));
  }

  TensorT(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw std::invalid_argument("tensor: data size does not match shape");
    }
  }

  static TensorT full(std::vector<int> shape, T value) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Indexed access; strides derived from the trailing dimensions.
  T& at(int a, int b) { return data_[idx2(a, b)]; }
  const T& at(int a, int b) const { return data_[idx2(a, b)]; }
  T& at(int a, int b, int c) { return data_[idx3(a, b, c)]; }
  const T& at(int a, int b, int c) const { return data_[idx3(a, b, c)]; }
  T& at(int a, int b, int c, int d) { return data_[idx4(a, b, c, d)]; }
  const T& at(int a, int b, int c, int d) const { return data_[idx4(a, b, c, d)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  TensorT reshaped(std::vector<int> shape) const {
    if (count(shape) != data_.size()) {
      throw std::invalid_argument("tensor: reshape changes element count");
    }
    return TensorT(std::move(shape), data_);
  }

  T sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }
  T min() const { return data_.empty() ? T(0) : *std::min_element(data_.begin(), data_.end()); }
  T max() const { return data_.empty() ? T(0) : *std::max_element(data_.begin(), data_.end()); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  void add_scaled(const TensorT& other, T scale) {
    if (!same_shape(other)) throw std::invalid_argument("tensor: shape mismatch in add_scaled");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static std::size_t count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    return shape.empty() ? 0 : n;
  }

  std::size_t idx2(int a, int b) const {
    return static_cast<std::size_t>(a) * shape_[1] + b;
  }
  std::size_t idx3(int a, int b, int c) const {
    return (static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c;
  }
  std::size_t idx4(int a, int b, int c, int d) const {
    return ((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

}  // namespace semgan
