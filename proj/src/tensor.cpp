#include "covert/tensor.hpp"

#include <sstream>

namespace covert {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

Tensor Tensor::slice(int n) const {
  Tensor out(Shape{1, shape_.c, shape_.h, shape_.w});
  std::copy_n(sample(n), shape_.sample_size(), out.data());
  return out;
}

Tensor Tensor::stack(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  Shape s = parts.front().shape();
  const int per = s.n;
  s.n = 0;
  for (const auto& p : parts) {
    if (p.shape().c != s.c || p.shape().h != s.h || p.shape().w != s.w)
      throw ConfigError("Tensor::stack: mismatched part shape " +
                        p.shape().str());
    s.n += p.shape().n;
  }
  (void)per;
  Tensor out(s);
  Real* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.vec().begin(), p.vec().end(), dst);
  return out;
}

void Tensor::reshape(Shape s) {
  if (s.numel() != data_.size())
    throw ConfigError("Tensor::reshape: " + shape_.str() + " -> " + s.str());
  shape_ = s;
}

Tensor& Tensor::operator+=(const Tensor& o) {
  require_same_shape(*this, o, "Tensor::operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(Real s) {
  for (auto& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](Real v) { return std::isfinite(v); });
}

double Tensor::sum() const {
  double s = 0.0;
  for (Real v : data_) s += v;
  return s;
}

double Tensor::sum_squares() const {
  double s = 0.0;
  for (Real v : data_) s += static_cast<double>(v) * v;
  return s;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!(a.shape() == b.shape()))
    throw ConfigError(std::string(what) + ": shape mismatch " +
                      a.shape().str() + " vs " + b.shape().str());
}

}  // namespace covert
