#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace covert {

#ifdef COVERT_USE_DOUBLE
using Real = double;
#else
using Real = float;
#endif

/// Batch-major 4-D shape (N, C, H, W). Feature maps of a single sample use n = 1.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(c) * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int block)
      : std::runtime_error(what), block_(block) {}
  int block() const { return block_; }

 private:
  int block_;
};

/// Dense NCHW tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0))
      : shape_(shape), data_(shape.numel(), fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> span() { return data_; }
  std::span<const Real> span() const { return data_; }
  std::vector<Real>& vec() { return data_; }
  const std::vector<Real>& vec() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(int n, int c, int h, int w) {
    return data_[index(n, c, h, w)];
  }
  Real at(int n, int c, int h, int w) const {
    return data_[index(n, c, h, w)];
  }

  Real* sample(int n) { return data_.data() + n * shape_.sample_size(); }
  const Real* sample(int n) const {
    return data_.data() + n * shape_.sample_size();
  }

  /// Copies sample n into a tensor of batch size one.
  Tensor slice(int n) const;
  /// Stacks equally shaped single-sample tensors along the batch axis.
  static Tensor stack(std::span<const Tensor> parts);

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(Real(0)); }
  void reshape(Shape s);

  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(Real s);

  bool all_finite() const;
  double sum() const;
  double sum_squares() const;

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }

  Shape shape_{};
  std::vector<Real> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace covert
