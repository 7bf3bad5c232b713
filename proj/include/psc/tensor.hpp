#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace psc {

// Dense row-major tensor. Hot loops index through raw pointers; the shape
// vector is only consulted at layer boundaries.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) { data.assign(numel_of(shape), T(0)); }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  // 3-d accessor for CHW tensors
  T& at3(int c, int y, int x) {
    return data[(static_cast<int64_t>(c) * shape[1] + y) * shape[2] + x];
  }
  T at3(int c, int y, int x) const {
    return data[(static_cast<int64_t>(c) * shape[1] + y) * shape[2] + x];
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (int64_t i = 0; i < numel(); ++i) out.data[static_cast<size_t>(i)] = static_cast<U>(data[static_cast<size_t>(i)]);
    return out;
  }
};

}  // namespace psc
