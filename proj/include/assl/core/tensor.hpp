#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace assl {

/// Dense row-major tensor with shared storage. Copies are shallow;
/// use clone() for a deep copy. Rank is anything >= 1, NCHW for images.
template <typename T>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    size_ = 1;
    for (int64_t d : shape_) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      size_ *= d;
    }
    data_ = std::shared_ptr<T[]>(new T[static_cast<size_t>(size_)]());
  }

  Tensor(std::initializer_list<int64_t> shape)
      : Tensor(std::vector<int64_t>(shape)) {}

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data(), t.data() + t.size(), value);
    return t;
  }

  static Tensor ones(std::vector<int64_t> shape) { return full(std::move(shape), T(1)); }

  static Tensor from_vector(std::vector<int64_t> shape, const std::vector<T>& values) {
    Tensor t(std::move(shape));
    if (static_cast<int64_t>(values.size()) != t.size())
      throw std::invalid_argument("Tensor::from_vector: size mismatch");
    std::copy(values.begin(), values.end(), t.data());
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  int64_t size() const { return size_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

  T* data() { return data_.get(); }
  const T* data() const { return data_.get(); }

  T& operator[](int64_t i) { return data_[i]; }
  const T& operator[](int64_t i) const { return data_[i]; }

  // NCHW-style accessors for tests and small kernels.
  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  T& at(int64_t i, int64_t j) { return data_[i * shape_[1] + j]; }
  const T& at(int64_t i, int64_t j) const { return data_[i * shape_[1] + j]; }

  /// View with a new shape over the same storage (element count must match).
  Tensor reshape(std::vector<int64_t> shape) const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    if (n != size_) throw std::invalid_argument("Tensor::reshape: element count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.size_ = size_;
    t.data_ = data_;
    return t;
  }

  Tensor clone() const {
    Tensor t(shape_);
    std::memcpy(t.data(), data(), static_cast<size_t>(size_) * sizeof(T));
    return t;
  }

  void fill(T value) { std::fill(data(), data() + size_, value); }

  void copy_from(const Tensor& other) {
    if (other.size_ != size_) throw std::invalid_argument("Tensor::copy_from: size mismatch");
    std::memcpy(data(), other.data(), static_cast<size_t>(size_) * sizeof(T));
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
  }

private:
  std::vector<int64_t> shape_;
  int64_t size_ = 0;
  std::shared_ptr<T[]> data_;
};

template <typename T>
inline bool all_finite(const Tensor<T>& t) {
  const T* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(static_cast<double>(p[i]))) return false;
  return true;
}

}  // namespace assl
