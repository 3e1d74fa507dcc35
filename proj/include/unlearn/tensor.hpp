#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "unlearn/common.hpp"

namespace unlearn {

// Dense row-major tensor. Rank is 2 for logits/weights and 4 for image
// batches (count x channels x height x width).
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<std::int64_t> shape, T value = T(0))
      : shape_(std::move(shape)), data_(numel_of(shape_), value) {}

  static TensorT zeros_like(const TensorT& other) { return TensorT(other.shape_); }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  // 4-D accessor (batch images).
  T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }

  // 2-D accessor (rows x cols).
  T& at(std::int64_t i, std::int64_t j) {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  const T& at(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  // Elements per leading-dimension slice (e.g. per example in a batch).
  std::int64_t slice_size() const {
    if (shape_.empty()) return 0;
    return shape_[0] == 0 ? 0 : size() / shape_[0];
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(shape_);
    for (std::int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  static std::size_t numel_of(const std::vector<std::int64_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
      check_contract(d >= 0, "tensor dimensions must be nonnegative");
      n *= static_cast<std::size_t>(d);
    }
    return shape.empty() ? 0 : n;
  }

  std::vector<std::int64_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (std::int64_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(static_cast<double>(t[i]))) return false;
  }
  return true;
}

}  // namespace unlearn
