#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rpn/common.hpp"
#include "rpn/random.hpp"

namespace rpn {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Dense row-major n-d array over a contiguous Eigen buffer. Last axis is
// fastest-varying; 4-d tensors follow the (batch, channel, height, width)
// convention used by every layer in the codec.
template <typename T>
class Tensor {
 public:
  using Storage = Eigen::Array<T, Eigen::Dynamic, 1>;
  using ArrayMap = Eigen::Map<Storage>;
  using ConstArrayMap = Eigen::Map<const Storage>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    for (int d : shape_) check_shape(d > 0, "Tensor dims must be positive");
    data_ = Storage::Zero(shape_numel(shape_));
  }

  Tensor(Shape shape, std::initializer_list<T> values) : Tensor(std::move(shape)) {
    check_shape(static_cast<int64_t>(values.size()) == size(),
                "initializer size mismatch");
    int64_t i = 0;
    for (T v : values) data_[i++] = v;
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

  static Tensor scalar(T value) { return full(Shape{1}, value); }

  static Tensor random_normal(Shape shape, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i)
      t.data_[i] = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  static Tensor random_uniform(Shape shape, Rng& rng, T lo, T hi) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i)
      t.data_[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[i]; }
  T operator[](int64_t i) const { return data_[i]; }

  // 4-d accessor (n, c, y, x).
  T& at(int n, int c, int y, int x) {
    return data_[((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + y) *
                     shape_[3] +
                 x];
  }
  T at(int n, int c, int y, int x) const {
    return data_[((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + y) *
                     shape_[3] +
                 x];
  }

  ArrayMap arr() { return ArrayMap(data_.data(), data_.size()); }
  ConstArrayMap arr() const { return ConstArrayMap(data_.data(), data_.size()); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(Shape new_shape) const {
    check_shape(shape_numel(new_shape) == size(),
                "reshape size mismatch: " + shape_str(shape_) + " -> " +
                    shape_str(new_shape));
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
  }

  void fill(T value) { data_.setConstant(value); }

  void add_(const Tensor& o) {
    check_shape(same_shape(o), "add_: shape mismatch");
    data_ += o.data_;
  }

  T min_value() const { return data_.minCoeff(); }
  T max_value() const { return data_.maxCoeff(); }
  T sum_value() const { return data_.sum(); }

 private:
  Shape shape_;
  Storage data_;
};

using TensorR = Tensor<Real>;

}  // namespace rpn
