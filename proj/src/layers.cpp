#include "covert/layers.hpp"

#include <cmath>
#include <cstring>

namespace covert {

void zero_grads(const ParamRefs& params) {
  for (Param* p : params) p->grad.zero();
}

std::size_t count_elements(const ParamRefs& params) {
  std::size_t n = 0;
  for (const Param* p : params) n += p->value.size();
  return n;
}

std::uint64_t checksum(const ParamRefs& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Param* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < p->value.size() * sizeof(Real); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

Conv2d::Conv2d(std::string name, int in_channels, int out_channels,
               kernels::ConvGeometry geometry)
    : weight(name + ".weight",
             Shape{out_channels, in_channels, geometry.kernel_h, geometry.kernel_w}),
      bias(name + ".bias", Shape{1, out_channels, 1, 1}),
      geometry_(geometry) {}

void Conv2d::init_kaiming(Rng& rng) {
  const Shape& s = weight.value.shape();
  const double fan_in = static_cast<double>(s.c) * s.h * s.w;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : weight.value.vec()) v = static_cast<Real>(dist(rng));
  bias.value.zero();
}

Tensor Conv2d::forward(const Tensor& x) const {
  Tensor y;
  kernels::conv2d_forward(x, weight.value, bias.value, geometry_, y);
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& dy, bool need_dx) {
  Tensor dx;
  kernels::conv2d_backward(x, weight.value, dy, geometry_,
                           need_dx ? &dx : nullptr, weight.grad, bias.grad);
  return dx;
}

BatchNorm2d::BatchNorm2d(std::string name, int channels, double momentum,
                         double eps)
    : gamma(name + ".gamma", Shape{1, channels, 1, 1}),
      beta(name + ".beta", Shape{1, channels, 1, 1}),
      running_mean(Shape{1, channels, 1, 1}, Real(0)),
      running_var(Shape{1, channels, 1, 1}, Real(1)),
      momentum_(momentum),
      eps_(eps) {
  gamma.value.fill(Real(1));
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train, Cache* cache) {
  const Shape& s = x.shape();
  const int hw = s.h * s.w;
  Tensor y(s);
  Tensor xhat(s);
  std::vector<double> inv_std(s.c);
  const double count = static_cast<double>(s.n) * hw;
  for (int c = 0; c < s.c; ++c) {
    double mean, var;
    if (train) {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const Real* p = x.sample(n) + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) sum += p[i];
      }
      mean = sum / count;
      for (int n = 0; n < s.n; ++n) {
        const Real* p = x.sample(n) + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / count;
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean[c] = static_cast<Real>((1 - momentum_) * running_mean[c] +
                                          momentum_ * mean);
      running_var[c] = static_cast<Real>((1 - momentum_) * running_var[c] +
                                         momentum_ * unbiased);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + eps_);
    inv_std[c] = is;
    const double g = gamma.value[c];
    const double b = beta.value[c];
    for (int n = 0; n < s.n; ++n) {
      const Real* p = x.sample(n) + static_cast<std::size_t>(c) * hw;
      Real* xh = xhat.sample(n) + static_cast<std::size_t>(c) * hw;
      Real* out = y.sample(n) + static_cast<std::size_t>(c) * hw;
      for (int i = 0; i < hw; ++i) {
        const double v = (p[i] - mean) * is;
        xh[i] = static_cast<Real>(v);
        out[i] = static_cast<Real>(g * v + b);
      }
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->train = train;
  }
  return y;
}

Tensor BatchNorm2d::backward(const Cache& cache, const Tensor& dy) {
  const Shape& s = dy.shape();
  const int hw = s.h * s.w;
  const double count = static_cast<double>(s.n) * hw;
  Tensor dx(s);
  for (int c = 0; c < s.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const Real* g = dy.sample(n) + static_cast<std::size_t>(c) * hw;
      const Real* xh = cache.xhat.sample(n) + static_cast<std::size_t>(c) * hw;
      for (int i = 0; i < hw; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += static_cast<double>(g[i]) * xh[i];
      }
    }
    gamma.grad[c] += static_cast<Real>(sum_dy_xhat);
    beta.grad[c] += static_cast<Real>(sum_dy);
    const double scale = gamma.value[c] * cache.inv_std[c];
    for (int n = 0; n < s.n; ++n) {
      const Real* g = dy.sample(n) + static_cast<std::size_t>(c) * hw;
      const Real* xh = cache.xhat.sample(n) + static_cast<std::size_t>(c) * hw;
      Real* out = dx.sample(n) + static_cast<std::size_t>(c) * hw;
      for (int i = 0; i < hw; ++i) {
        if (cache.train)
          out[i] = static_cast<Real>(
              scale * (g[i] - sum_dy / count - xh[i] * sum_dy_xhat / count));
        else
          out[i] = static_cast<Real>(scale * g[i]);
      }
    }
  }
  return dx;
}

Linear::Linear(std::string name, int in_features, int out_features)
    : weight(name + ".weight", Shape{out_features, in_features, 1, 1}),
      bias(name + ".bias", Shape{1, out_features, 1, 1}) {}

void Linear::init_kaiming(Rng& rng) {
  const double fan_in = weight.value.shape().c;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : weight.value.vec()) v = static_cast<Real>(dist(rng));
  bias.value.zero();
}

Tensor Linear::forward(const Tensor& x) const {
  const int in = weight.value.shape().c;
  const int out = weight.value.shape().n;
  if (static_cast<int>(x.shape().sample_size()) != in)
    throw ConfigError("Linear: input " + x.shape().str() + " expects " +
                      std::to_string(in) + " features");
  const int n = x.shape().n;
  Tensor y(Shape{n, out, 1, 1});
  for (int b = 0; b < n; ++b) {
    const Real* xi = x.sample(b);
    for (int o = 0; o < out; ++o) {
      const Real* wr = weight.value.data() + static_cast<std::size_t>(o) * in;
      double acc = bias.value[o];
      for (int i = 0; i < in; ++i) acc += static_cast<double>(wr[i]) * xi[i];
      y.sample(b)[o] = static_cast<Real>(acc);
    }
  }
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& dy, bool need_dx) {
  const int in = weight.value.shape().c;
  const int out = weight.value.shape().n;
  const int n = x.shape().n;
  Tensor dx;
  if (need_dx) dx = Tensor(x.shape());
  for (int b = 0; b < n; ++b) {
    const Real* xi = x.sample(b);
    const Real* g = dy.sample(b);
    for (int o = 0; o < out; ++o) {
      const Real go = g[o];
      bias.grad[o] += go;
      Real* wg = weight.grad.data() + static_cast<std::size_t>(o) * in;
      const Real* wr = weight.value.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) wg[i] += go * xi[i];
      if (need_dx) {
        Real* dxi = dx.sample(b);
        for (int i = 0; i < in; ++i) dxi[i] += go * wr[i];
      }
    }
  }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.vec()) v = v < Real(0) ? Real(0) : v;  // NaN passes through
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(y[i] > Real(0))) dx[i] = Real(0);
  return dx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.vec()) {
    const double d = v;
    v = static_cast<Real>(d >= 0 ? 1.0 / (1.0 + std::exp(-d))
                                 : std::exp(d) / (1.0 + std::exp(d)));
  }
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (1 - y[i]);
  return dx;
}

Tensor dropout(const Tensor& x, double p, bool train, Rng* rng, Tensor* mask) {
  if (!train || p <= 0.0 || rng == nullptr) {
    if (mask) *mask = Tensor();
    return x;
  }
  Tensor m(x.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const Real scale = static_cast<Real>(1.0 / (1.0 - p));
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    m[i] = keep(*rng) ? scale : Real(0);
    y[i] *= m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& dy) {
  if (mask.empty()) return dy;
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
  return dx;
}

}  // namespace covert
