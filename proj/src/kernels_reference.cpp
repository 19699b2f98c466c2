#include <cmath>

#include "covert/kernels.hpp"

namespace covert::kernels::reference {

void conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                    const ConvGeometry& g, Tensor& y) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const int oh = g.out_h(xs.h);
  const int ow = g.out_w(xs.w);
  y = Tensor(Shape{xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < ws.n; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias[co];
          for (int ci = 0; ci < xs.c; ++ci)
            for (int ki = 0; ki < g.kernel_h; ++ki)
              for (int kj = 0; kj < g.kernel_w; ++kj) {
                const int iy = oy * g.stride_h - g.pad_h + ki * g.dilation_h;
                const int ix = ox * g.stride_w - g.pad_w + kj * g.dilation_w;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                acc += static_cast<double>(weight.at(co, ci, ki, kj)) *
                       x.at(n, ci, iy, ix);
              }
          y.at(n, co, oy, ox) = static_cast<Real>(acc);
        }
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     const ConvGeometry& g, Tensor* dx, Tensor& dweight,
                     Tensor& dbias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const Shape& ys = dy.shape();
  if (dx) *dx = Tensor(xs);
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < ws.n; ++co)
      for (int oy = 0; oy < ys.h; ++oy)
        for (int ox = 0; ox < ys.w; ++ox) {
          const Real gv = dy.at(n, co, oy, ox);
          dbias[co] += gv;
          for (int ci = 0; ci < xs.c; ++ci)
            for (int ki = 0; ki < g.kernel_h; ++ki)
              for (int kj = 0; kj < g.kernel_w; ++kj) {
                const int iy = oy * g.stride_h - g.pad_h + ki * g.dilation_h;
                const int ix = ox * g.stride_w - g.pad_w + kj * g.dilation_w;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                dweight.at(co, ci, ki, kj) += gv * x.at(n, ci, iy, ix);
                if (dx) dx->at(n, ci, iy, ix) += gv * weight.at(co, ci, ki, kj);
              }
        }
}

namespace {

void source_coord(int o, int in, int out, int& i0, int& i1, double& frac) {
  double src = (o + 0.5) * static_cast<double>(in) / out - 0.5;
  if (src < 0) src = 0;
  i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
  i1 = std::min(i0 + 1, in - 1);
  frac = src - i0;
}

}  // namespace

void upsample_bilinear_forward(const Tensor& x, int out_h, int out_w,
                               Tensor& y) {
  const Shape& s = x.shape();
  y = Tensor(Shape{s.n, s.c, out_h, out_w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          int y0, y1, x0, x1;
          double fy, fx;
          source_coord(oy, s.h, out_h, y0, y1, fy);
          source_coord(ox, s.w, out_w, x0, x1, fx);
          const double v = (1 - fy) * (1 - fx) * x.at(n, c, y0, x0) +
                           (1 - fy) * fx * x.at(n, c, y0, x1) +
                           fy * (1 - fx) * x.at(n, c, y1, x0) +
                           fy * fx * x.at(n, c, y1, x1);
          y.at(n, c, oy, ox) = static_cast<Real>(v);
        }
}

void upsample_bilinear_backward(const Tensor& dy, const Shape& in_shape,
                                Tensor& dx) {
  const Shape& s = dy.shape();
  dx = Tensor(in_shape);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < s.h; ++oy)
        for (int ox = 0; ox < s.w; ++ox) {
          int y0, y1, x0, x1;
          double fy, fx;
          source_coord(oy, in_shape.h, s.h, y0, y1, fy);
          source_coord(ox, in_shape.w, s.w, x0, x1, fx);
          const double gv = dy.at(n, c, oy, ox);
          dx.at(n, c, y0, x0) += static_cast<Real>(gv * (1 - fy) * (1 - fx));
          dx.at(n, c, y0, x1) += static_cast<Real>(gv * (1 - fy) * fx);
          dx.at(n, c, y1, x0) += static_cast<Real>(gv * fy * (1 - fx));
          dx.at(n, c, y1, x1) += static_cast<Real>(gv * fy * fx);
        }
}

}  // namespace covert::kernels::reference
