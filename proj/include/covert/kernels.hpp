#pragma once

// Dense compute kernels. The functions in `covert::kernels` are the
// OpenMP-parallel versions used by every layer; `covert::kernels::reference`
// holds plain serial loop nests with identical signatures that the tests and
// the kernel benchmark compare against.

#include "covert/tensor.hpp"

namespace covert::kernels {

struct ConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  int dilation_h = 1;
  int dilation_w = 1;

  static ConvGeometry square(int k, int stride, int pad, int dilation = 1) {
    return {k, k, stride, stride, pad, pad, dilation, dilation};
  }
  int out_h(int h) const {
    return (h + 2 * pad_h - dilation_h * (kernel_h - 1) - 1) / stride_h + 1;
  }
  int out_w(int w) const {
    return (w + 2 * pad_w - dilation_w * (kernel_w - 1) - 1) / stride_w + 1;
  }
};

// weight: (C_out, C_in, kernel_h, kernel_w); bias: (1, C_out, 1, 1).
// `y` is resized as needed.
void conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                    const ConvGeometry& g, Tensor& y);

// Accumulates into dweight and dbias. dx is overwritten when non-null.
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     const ConvGeometry& g, Tensor* dx, Tensor& dweight,
                     Tensor& dbias);

// Bilinear resize with half-pixel centers (align_corners = false).
void upsample_bilinear_forward(const Tensor& x, int out_h, int out_w,
                               Tensor& y);
void upsample_bilinear_backward(const Tensor& dy, const Shape& in_shape,
                                Tensor& dx);

namespace reference {

void conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                    const ConvGeometry& g, Tensor& y);
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     const ConvGeometry& g, Tensor* dx, Tensor& dweight,
                     Tensor& dbias);
void upsample_bilinear_forward(const Tensor& x, int out_h, int out_w,
                               Tensor& y);
void upsample_bilinear_backward(const Tensor& dy, const Shape& in_shape,
                                Tensor& dx);

}  // namespace reference

/// Number of threads the parallel kernels will use.
int max_threads();

}  // namespace covert::kernels
