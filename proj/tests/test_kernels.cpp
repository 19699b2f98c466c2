#include <doctest.h>

#include "covert/kernels.hpp"
#include "grad_check.hpp"

using namespace covert;
using testutil::random_tensor;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_CASE("parallel conv kernels agree with the serial reference") {
  struct Case {
    int cin, cout, h, w, k, stride, pad, dil;
  };
  for (Case c : {Case{3, 8, 16, 16, 3, 1, 1, 1}, Case{8, 16, 15, 13, 3, 2, 1, 1},
                 Case{5, 4, 9, 9, 3, 1, 2, 2}, Case{6, 7, 8, 8, 1, 1, 0, 1}}) {
    const auto g = kernels::ConvGeometry::square(c.k, c.stride, c.pad, c.dil);
    const Tensor x = random_tensor({3, c.cin, c.h, c.w}, 1);
    const Tensor w = random_tensor({c.cout, c.cin, c.k, c.k}, 2);
    const Tensor b = random_tensor({1, c.cout, 1, 1}, 3);
    Tensor y, y_ref;
    kernels::conv2d_forward(x, w, b, g, y);
    kernels::reference::conv2d_forward(x, w, b, g, y_ref);
    CHECK(max_abs_diff(y, y_ref) < 1e-4);

    const Tensor dy = random_tensor(y.shape(), 4);
    Tensor dx, dx_ref, dw(w.shape()), dw_ref(w.shape()), db(b.shape()), db_ref(b.shape());
    kernels::conv2d_backward(x, w, dy, g, &dx, dw, db);
    kernels::reference::conv2d_backward(x, w, dy, g, &dx_ref, dw_ref, db_ref);
    CHECK(max_abs_diff(dx, dx_ref) < 1e-4);
    CHECK(max_abs_diff(dw, dw_ref) < 1e-3);
    CHECK(max_abs_diff(db, db_ref) < 1e-3);
  }
}

TEST_CASE("parallel upsampling agrees with the serial reference") {
  const Tensor x = random_tensor({2, 3, 8, 8}, 5);
  Tensor y, y_ref;
  kernels::upsample_bilinear_forward(x, 32, 32, y);
  kernels::reference::upsample_bilinear_forward(x, 32, 32, y_ref);
  CHECK(max_abs_diff(y, y_ref) < 1e-6);
  Tensor dx, dx_ref;
  kernels::upsample_bilinear_backward(y, x.shape(), dx);
  kernels::reference::upsample_bilinear_backward(y, x.shape(), dx_ref);
  CHECK(max_abs_diff(dx, dx_ref) < 1e-4);
}

TEST_CASE("upsampling a constant map stays constant") {
  Tensor x({1, 1, 4, 4}, Real(2.5));
  Tensor y;
  kernels::upsample_bilinear_forward(x, 16, 16, y);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(2.5));
}

TEST_CASE("conv backward accumulates into weight gradients") {
  const auto g = kernels::ConvGeometry::square(3, 1, 1);
  const Tensor x = random_tensor({1, 2, 5, 5}, 6);
  const Tensor w = random_tensor({3, 2, 3, 3}, 7);
  const Tensor dy = random_tensor({1, 3, 5, 5}, 8);
  Tensor dw(w.shape()), db({1, 3, 1, 1});
  kernels::conv2d_backward(x, w, dy, g, nullptr, dw, db);
  const Tensor once = dw;
  kernels::conv2d_backward(x, w, dy, g, nullptr, dw, db);
  for (std::size_t i = 0; i < dw.size(); ++i)
    CHECK(dw[i] == doctest::Approx(2 * once[i]).epsilon(1e-5));
}
