#pragma once

#include <cmath>
#include <functional>

#include "covert/tensor.hpp"
#include "covert/rng.hpp"

namespace testutil {

using covert::Real;
using covert::Tensor;

inline void randomize(Tensor& t, covert::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.vec()) v = static_cast<Real>(n(rng));
}

inline Tensor random_tensor(covert::Shape s, std::uint64_t seed, double scale = 1.0) {
  Tensor t(s);
  covert::Rng rng = covert::make_rng(seed, 77);
  randomize(t, rng, scale);
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

/// Largest relative error between `analytic` and central differences of
/// `loss` with respect to `x`, checked at up to `max_probes` entries.
inline double max_rel_error(Tensor& x, const Tensor& analytic,
                            const std::function<double()>& loss,
                            double h = 1e-5, std::size_t max_probes = 40) {
  double worst = 0.0;
  const std::size_t stride = std::max<std::size_t>(1, x.size() / max_probes);
  for (std::size_t i = 0; i < x.size(); i += stride) {
    const Real orig = x[i];
    x[i] = orig + h;
    const double up = loss();
    x[i] = orig - h;
    const double down = loss();
    x[i] = orig;
    const double fd = (up - down) / (2 * h);
    const double a = analytic[i];
    const double err = std::abs(fd - a) / std::max(1e-3, std::abs(fd) + std::abs(a));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace testutil
