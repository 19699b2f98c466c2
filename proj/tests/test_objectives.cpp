#include <doctest.h>

#include <cmath>

#include "covert/objectives.hpp"
#include "grad_check.hpp"

using namespace covert;

namespace {

LossWeights weights(double lc, double lcts) {
  LossWeights w;
  w.lambda_c = lc;
  w.lambda_cts = lcts;
  return w;
}

Tensor rows(const std::vector<std::vector<float>>& r) {
  Tensor t({static_cast<int>(r.size()), static_cast<int>(r[0].size()), 1, 1});
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j) t[i * r[i].size() + j] = r[i][j];
  return t;
}

}  // namespace

TEST_CASE("total loss examples") {
  CHECK(total_loss(0, 0, 0, 0, 0, weights(3, 7)).l_total == 0.0);
  CHECK(total_loss(1, 1, 1, 1, 1, weights(1, 1)).l_total == doctest::Approx(5.0));
  const auto b = total_loss(0.5, 0.6, 0.2, 0.1, 0.3, weights(10, 2));
  CHECK(b.l_total == doctest::Approx(3.8).epsilon(1e-12));
  CHECK(b.l_c_ste == 0.2);
  CHECK(b.l_cts == 0.3);
}

TEST_CASE("property: with lambda_cts = 0 the contrastive term has no influence") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0, 5);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng), s = u(rng);
    CHECK(total_loss(a, b, c, s, u(rng), weights(2, 0)).l_total ==
          total_loss(a, b, c, s, u(rng), weights(2, 0)).l_total);
  }
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  w.beta = -1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = LossWeights{};
  w.cts_temperature = 0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("sparsity loss examples") {
  GatePolicy p(3, 1.0);
  const GateVector zeros{{0, 0, 0}, GateMode::Hard};
  CHECK(sparsity_loss_value(p, zeros, zeros, 1.0, 1.0) == 0.0);
  const GateVector ones = GateVector::ones(3);
  CHECK(sparsity_loss_value(p, ones, ones, 1.0, 0.0) == doctest::Approx(6.0));

  GatePolicy q(2, 1.0);
  q.set_logit(PathId::Stego, 0, 1, std::log(3.0));  // (0.25, 0.75) against (0.5, 0.5)
  const double expect = 0.5 * (0.25 * std::log(0.5) + 0.75 * std::log(1.5));
  CHECK(expect == doctest::Approx(0.06543).epsilon(1e-4));
  const GateVector z2{{0, 0}, GateMode::Hard};
  CHECK(sparsity_loss_value(q, z2, z2, 0.0, 1.0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(sparsity_loss(q, z2, z2, 0.0, 1.0).value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("KL depth weighting vanishes at the last block") {
  GatePolicy p(4, 1.0);
  p.set_logit(PathId::Stego, 3, 1, 4.0);
  const GateVector z{{0, 0, 0, 0}, GateMode::Hard};
  CHECK(sparsity_loss_value(p, z, z, 0.0, 1.0) == 0.0);
  // The same divergence costs more the earlier it sits.
  double prev = 1e9;
  for (int l = 0; l < 3; ++l) {
    GatePolicy r(4, 1.0);
    r.set_logit(PathId::Stego, l, 1, 4.0);
    const double v = sparsity_loss_value(r, z, z, 0.0, 1.0);
    CHECK(v > 0.0);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("binary KL properties") {
  CHECK(binary_kl({0.3, 0.7}, {0.3, 0.7}) == doctest::Approx(0.0));
  CHECK(binary_kl({0.1, 0.9}, {0.6, 0.4}) > 0.0);
  CHECK(std::isfinite(binary_kl({0.0, 1.0}, {0.5, 0.5})));
}

TEST_CASE("contrastive loss examples") {
  CHECK(contrastive_loss(rows({{1, 2}}), rows({{3, -1}}), 0.5).value == doctest::Approx(0.0));
  const Tensor id = rows({{1, 0}, {0, 1}});
  CHECK(contrastive_loss(id, id, 1.0).value ==
        doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-9));
  CHECK(contrastive_loss(id, id, 1.0).value == doctest::Approx(0.3133).epsilon(1e-4));
  for (int n : {2, 4, 8}) {
    Tensor same({n, 3, 1, 1}, 0.7f);
    CHECK(std::abs(contrastive_loss(same, same, 0.1).value - std::log(double(n))) < 1e-6);
  }
}

TEST_CASE("contrastive loss errors") {
  CHECK_THROWS_AS(contrastive_loss(std::vector<FeatureMap>{}, std::vector<FeatureMap>{}, 0.1),
                  std::invalid_argument);
  const Tensor a = rows({{1, 0}, {0, 0}});
  try {
    contrastive_loss(a, a, 0.1);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()) == "degenerate feature for cosine similarity");
  }
}

TEST_CASE("cosine similarity and alignment surrogate") {
  const std::vector<Real> a{1, 0}, b{0, 1}, c{-2, 0};
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));
  CHECK(cosine_similarity(a, c) == doctest::Approx(-1.0));
  const Tensor x = testutil::random_tensor({3, 2, 2, 2}, 2);
  CHECK(cosine_alignment_loss(x, x).value == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(mean_paired_cosine(x, x) == doctest::Approx(1.0));
}

TEST_CASE("property: contrastive loss is bounded below by zero and decreases with alignment") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Tensor a = testutil::random_tensor({4, 6, 1, 1}, 100 + i);
    const Tensor b = testutil::random_tensor({4, 6, 1, 1}, 200 + i);
    const double far = contrastive_loss(a, b, 0.2).value;
    const double near = contrastive_loss(a, a, 0.2).value;
    CHECK(far >= 0.0);
    CHECK(near <= far + 1e-9);
  }
}
