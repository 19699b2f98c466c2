#include "covert/kernels.hpp"

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace covert::kernels {
namespace {

struct ConvDims {
  int n, cin, h, w, cout, oh, ow, ckk, hw;
};

ConvDims conv_dims(const Tensor& x, const Tensor& weight,
                   const ConvGeometry& g) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.c != xs.c || ws.h != g.kernel_h || ws.w != g.kernel_w)
    throw ConfigError("conv2d: weight " + ws.str() +
                      " incompatible with input " + xs.str());
  ConvDims d{};
  d.n = xs.n;
  d.cin = xs.c;
  d.h = xs.h;
  d.w = xs.w;
  d.cout = ws.n;
  d.oh = g.out_h(xs.h);
  d.ow = g.out_w(xs.w);
  if (d.oh <= 0 || d.ow <= 0)
    throw ConfigError("conv2d: empty output for input " + xs.str());
  d.ckk = d.cin * g.kernel_h * g.kernel_w;
  d.hw = d.oh * d.ow;
  return d;
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride_h == 1 &&
         g.stride_w == 1 && g.pad_h == 0 && g.pad_w == 0;
}

// col: (ckk, oh*ow), row-major.
void im2col(const Real* x, const ConvDims& d, const ConvGeometry& g,
            Real* col) {
  for (int ci = 0; ci < d.cin; ++ci) {
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        Real* row = col + (static_cast<std::size_t>(ci * g.kernel_h + ki) *
                               g.kernel_w +
                           kj) *
                              d.hw;
        const Real* plane = x + static_cast<std::size_t>(ci) * d.h * d.w;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * g.stride_h - g.pad_h + ki * g.dilation_h;
          Real* out = row + oy * d.ow;
          if (iy < 0 || iy >= d.h) {
            for (int ox = 0; ox < d.ow; ++ox) out[ox] = Real(0);
            continue;
          }
          const Real* src = plane + iy * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * g.stride_w - g.pad_w + kj * g.dilation_w;
            out[ox] = (ix >= 0 && ix < d.w) ? src[ix] : Real(0);
          }
        }
      }
    }
  }
}

void col2im(const Real* col, const ConvDims& d, const ConvGeometry& g,
            Real* x) {
  std::fill(x, x + static_cast<std::size_t>(d.cin) * d.h * d.w, Real(0));
  for (int ci = 0; ci < d.cin; ++ci) {
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        const Real* row =
            col + (static_cast<std::size_t>(ci * g.kernel_h + ki) * g.kernel_w +
                   kj) *
                      d.hw;
        Real* plane = x + static_cast<std::size_t>(ci) * d.h * d.w;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * g.stride_h - g.pad_h + ki * g.dilation_h;
          if (iy < 0 || iy >= d.h) continue;
          Real* dst = plane + iy * d.w;
          const Real* in = row + oy * d.ow;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * g.stride_w - g.pad_w + kj * g.dilation_w;
            if (ix >= 0 && ix < d.w) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

// c[i, :] (+)= sum_k a[i, k] * b[k, :]
inline void gemm_rows(int m, int n, int k, const Real* a, const Real* b,
                      Real* c) {
  for (int i = 0; i < m; ++i) {
    Real* __restrict ci = c + static_cast<std::size_t>(i) * n;
    const Real* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const Real s = ai[p];
      if (s == Real(0)) continue;
      const Real* __restrict bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += s * bp[j];
    }
  }
}

void transpose(const Real* src, int rows, int cols, Real* dst) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      dst[static_cast<std::size_t>(c) * rows + r] =
          src[static_cast<std::size_t>(r) * cols + c];
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                    const ConvGeometry& g, Tensor& y) {
  const ConvDims d = conv_dims(x, weight, g);
  const Shape ys{d.n, d.cout, d.oh, d.ow};
  if (!(y.shape() == ys)) y = Tensor(ys);
  const bool pointwise = is_pointwise(g);
  const Real* w = weight.data();
  const Real* b = bias.data();

#pragma omp parallel
  {
    std::vector<Real> col(pointwise ? 0 : static_cast<std::size_t>(d.ckk) * d.hw);
#pragma omp for schedule(static)
    for (int n = 0; n < d.n; ++n) {
      const Real* src = x.sample(n);
      if (!pointwise) {
        im2col(src, d, g, col.data());
        src = col.data();
      }
      Real* out = y.sample(n);
      for (int co = 0; co < d.cout; ++co)
        std::fill(out + static_cast<std::size_t>(co) * d.hw,
                  out + static_cast<std::size_t>(co + 1) * d.hw, b[co]);
      gemm_rows(d.cout, d.hw, d.ckk, w, src, out);
    }
  }
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     const ConvGeometry& g, Tensor* dx, Tensor& dweight,
                     Tensor& dbias) {
  const ConvDims d = conv_dims(x, weight, g);
  if (!(dy.shape() == Shape{d.n, d.cout, d.oh, d.ow}))
    throw ConfigError("conv2d_backward: dy shape " + dy.shape().str());
  const bool pointwise = is_pointwise(g);

  // Transposed im2col buffers for every sample: (hw, ckk).
  std::vector<Real> colt(static_cast<std::size_t>(d.n) * d.hw * d.ckk);
#pragma omp parallel
  {
    std::vector<Real> col(pointwise ? 0 : static_cast<std::size_t>(d.ckk) * d.hw);
#pragma omp for schedule(static)
    for (int n = 0; n < d.n; ++n) {
      const Real* src = x.sample(n);
      if (!pointwise) {
        im2col(src, d, g, col.data());
        src = col.data();
      }
      transpose(src, d.ckk, d.hw,
                colt.data() + static_cast<std::size_t>(n) * d.hw * d.ckk);
    }
  }

  // Rows of dweight are independent; each row sums samples in a fixed order.
  Real* dw = dweight.data();
  Real* db = dbias.data();
#pragma omp parallel for schedule(static)
  for (int co = 0; co < d.cout; ++co) {
    Real* __restrict row = dw + static_cast<std::size_t>(co) * d.ckk;
    double bsum = 0.0;
    for (int n = 0; n < d.n; ++n) {
      const Real* g_row = dy.sample(n) + static_cast<std::size_t>(co) * d.hw;
      const Real* ct = colt.data() + static_cast<std::size_t>(n) * d.hw * d.ckk;
      for (int p = 0; p < d.hw; ++p) {
        const Real s = g_row[p];
        bsum += s;
        if (s == Real(0)) continue;
        const Real* __restrict cp = ct + static_cast<std::size_t>(p) * d.ckk;
        for (int k = 0; k < d.ckk; ++k) row[k] += s * cp[k];
      }
    }
    db[co] += static_cast<Real>(bsum);
  }

  if (dx == nullptr) return;
  if (!(dx->shape() == x.shape())) *dx = Tensor(x.shape());
  std::vector<Real> wt(static_cast<std::size_t>(d.ckk) * d.cout);
  transpose(weight.data(), d.cout, d.ckk, wt.data());
#pragma omp parallel
  {
    std::vector<Real> dcol(static_cast<std::size_t>(d.ckk) * d.hw);
#pragma omp for schedule(static)
    for (int n = 0; n < d.n; ++n) {
      Real* target = pointwise ? dx->sample(n) : dcol.data();
      std::fill(target, target + static_cast<std::size_t>(d.ckk) * d.hw, Real(0));
      gemm_rows(d.ckk, d.hw, d.cout, wt.data(), dy.sample(n), target);
      if (!pointwise) col2im(dcol.data(), d, g, dx->sample(n));
    }
  }
}

namespace {

struct Lerp {
  int i0, i1;
  Real l1;
};

std::vector<Lerp> lerp_table(int in, int out) {
  std::vector<Lerp> t(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = i0 < in - 1 ? i0 + 1 : i0;
    t[o] = {i0, i1, static_cast<Real>(src - i0)};
  }
  return t;
}

}  // namespace

void upsample_bilinear_forward(const Tensor& x, int out_h, int out_w,
                               Tensor& y) {
  const Shape& s = x.shape();
  const Shape ys{s.n, s.c, out_h, out_w};
  if (!(y.shape() == ys)) y = Tensor(ys);
  const auto ty = lerp_table(s.h, out_h);
  const auto tx = lerp_table(s.w, out_w);
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const Real* src = x.data() + static_cast<std::size_t>(p) * s.h * s.w;
    Real* dst = y.data() + static_cast<std::size_t>(p) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const Lerp& ly = ty[oy];
      const Real* r0 = src + ly.i0 * s.w;
      const Real* r1 = src + ly.i1 * s.w;
      for (int ox = 0; ox < out_w; ++ox) {
        const Lerp& lx = tx[ox];
        const Real top = r0[lx.i0] + lx.l1 * (r0[lx.i1] - r0[lx.i0]);
        const Real bot = r1[lx.i0] + lx.l1 * (r1[lx.i1] - r1[lx.i0]);
        dst[oy * out_w + ox] = top + ly.l1 * (bot - top);
      }
    }
  }
}

void upsample_bilinear_backward(const Tensor& dy, const Shape& in_shape,
                                Tensor& dx) {
  const Shape& s = dy.shape();
  if (!(dx.shape() == in_shape)) dx = Tensor(in_shape);
  const auto ty = lerp_table(in_shape.h, s.h);
  const auto tx = lerp_table(in_shape.w, s.w);
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const Real* src = dy.data() + static_cast<std::size_t>(p) * s.h * s.w;
    Real* dst = dx.data() + static_cast<std::size_t>(p) * in_shape.h * in_shape.w;
    std::fill(dst, dst + static_cast<std::size_t>(in_shape.h) * in_shape.w, Real(0));
    for (int oy = 0; oy < s.h; ++oy) {
      const Lerp& ly = ty[oy];
      Real* r0 = dst + ly.i0 * in_shape.w;
      Real* r1 = dst + ly.i1 * in_shape.w;
      for (int ox = 0; ox < s.w; ++ox) {
        const Lerp& lx = tx[ox];
        const Real gval = src[oy * s.w + ox];
        const Real gt = gval * (1 - ly.l1);
        const Real gb = gval * ly.l1;
        r0[lx.i0] += gt * (1 - lx.l1);
        r0[lx.i1] += gt * lx.l1;
        r1[lx.i0] += gb * (1 - lx.l1);
        r1[lx.i1] += gb * lx.l1;
      }
    }
  }
}

}  // namespace covert::kernels
