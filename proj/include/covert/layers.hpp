#pragma once

// Trainable building blocks with explicit forward/backward passes.
// Layers hold parameters only; activations needed by backward live in
// caller-owned caches so one layer can serve several forward passes (the
// Explicit and Stego paths share the same block weights).

#include <string>
#include <vector>

#include "covert/kernels.hpp"
#include "covert/rng.hpp"
#include "covert/tensor.hpp"

namespace covert {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}
};

using ParamRefs = std::vector<Param*>;

void zero_grads(const ParamRefs& params);
std::size_t count_elements(const ParamRefs& params);
/// FNV-1a over parameter bytes; used to assert weight identity.
std::uint64_t checksum(const ParamRefs& params);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels,
         kernels::ConvGeometry geometry);

  void init_kaiming(Rng& rng);
  Tensor forward(const Tensor& x) const;
  /// Accumulates parameter gradients; returns dL/dx when `need_dx`.
  Tensor backward(const Tensor& x, const Tensor& dy, bool need_dx = true);
  void collect(ParamRefs& out) { out.push_back(&weight); out.push_back(&bias); }

  int in_channels() const { return weight.value.shape().c; }
  int out_channels() const { return weight.value.shape().n; }
  const kernels::ConvGeometry& geometry() const { return geometry_; }

  Param weight;
  Param bias;

 private:
  kernels::ConvGeometry geometry_{};
};

class BatchNorm2d {
 public:
  struct Cache {
    Tensor xhat;
    std::vector<double> inv_std;
    bool train = false;
  };

  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels, double momentum = 0.1,
              double eps = 1e-5);

  Tensor forward(const Tensor& x, bool train, Cache* cache);
  Tensor backward(const Cache& cache, const Tensor& dy);
  void collect(ParamRefs& out) { out.push_back(&gamma); out.push_back(&beta); }

  Param gamma;
  Param beta;
  Tensor running_mean;
  Tensor running_var;

 private:
  double momentum_ = 0.1;
  double eps_ = 1e-5;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features);

  void init_kaiming(Rng& rng);
  /// x: (N, in, 1, 1) or any shape whose sample size equals `in`.
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& dy, bool need_dx = true);
  void collect(ParamRefs& out) { out.push_back(&weight); out.push_back(&bias); }

  Param weight;  // (out, in, 1, 1)
  Param bias;    // (1, out, 1, 1)
};

Tensor relu(const Tensor& x);
/// dy masked by y > 0, where y is the relu output.
Tensor relu_backward(const Tensor& y, const Tensor& dy);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

/// Inverted dropout. In training mode fills `mask` with 0 or 1/(1-p).
Tensor dropout(const Tensor& x, double p, bool train, Rng* rng, Tensor* mask);
Tensor dropout_backward(const Tensor& mask, const Tensor& dy);

}  // namespace covert
