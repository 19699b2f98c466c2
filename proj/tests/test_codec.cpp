#include <doctest.h>

#include <cmath>
#include <numbers>

#include "covert/codec.hpp"
#include "grad_check.hpp"

using namespace covert;

namespace {

DecoderConfig small(int out) {
  DecoderConfig c;
  c.in_channels = 3;
  c.hidden = 5;
  c.out_channels = out;
  c.modules = 2;
  c.dilations = {1, 2};
  c.dropout = 0.1;
  c.output_hw = {8, 8};
  return c;
}

void randomize_biases(Decoder& d, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& b : d.branches())
    for (Conv2d* c : {&b.dilated, &b.mid, &b.out}) testutil::randomize(c->bias.value, rng, 0.8);
}

// Response of the decoder to a zero input, computed from biases and 1x1 weights only.
std::vector<double> bias_only(Decoder& d) {
  const auto& cfg = d.config();
  std::vector<double> out(cfg.out_channels, 0.0);
  for (auto& b : d.branches()) {
    std::vector<double> a1(cfg.hidden), a2(cfg.hidden);
    for (int h = 0; h < cfg.hidden; ++h) a1[h] = std::max(0.0, double(b.dilated.bias.value[h]));
    for (int o = 0; o < cfg.hidden; ++o) {
      double s = b.mid.bias.value[o];
      for (int i = 0; i < cfg.hidden; ++i) s += double(b.mid.weight.value[o * cfg.hidden + i]) * a1[i];
      a2[o] = std::max(0.0, s);
    }
    for (int o = 0; o < cfg.out_channels; ++o) {
      double s = b.out.bias.value[o];
      for (int i = 0; i < cfg.hidden; ++i) s += double(b.out.weight.value[o * cfg.hidden + i]) * a2[i];
      out[o] += s / cfg.modules;
    }
  }
  return out;
}

ReceivedFeature rx(Tensor t) {
  ReceivedFeature r;
  r.data = std::move(t);
  return r;
}

}  // namespace

TEST_CASE("public decoder on zero input gives the bias-only response") {
  Decoder d(small(4), DecoderTask::Public, 1, "pub");
  randomize_biases(d, 2);
  const auto expect = bias_only(d);
  const Tensor y = decode_public(d, rx(Tensor({2, 3, 4, 4}))).class_logits;
  REQUIRE(y.shape() == Shape{2, 4, 8, 8});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 4; ++c)
      for (int h = 0; h < 8; ++h)
        for (int w = 0; w < 8; ++w) CHECK(y.at(n, c, h, w) == doctest::Approx(expect[c]).epsilon(1e-9));
}

TEST_CASE("covert decoder on zero input gives sigmoid of the bias-only response") {
  Decoder d(small(1), DecoderTask::Covert, 1, "cov");
  randomize_biases(d, 3);
  const double expect = 1.0 / (1.0 + std::exp(-bias_only(d)[0]));
  const Tensor y = decode_covert(d, rx(Tensor({1, 3, 4, 4}))).depth;
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("covert outputs lie strictly inside the unit interval") {
  Decoder d(small(1), DecoderTask::Covert, 4, "cov");
  for (int s = 0; s < 5; ++s) {
    const Tensor y = decode_covert(d, rx(testutil::random_tensor({2, 3, 4, 4}, s, 3.0))).depth;
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(y[i] > 0.0);
      CHECK(y[i] < 1.0);
    }
  }
}

TEST_CASE("decoding is deterministic and rejects mismatched inputs") {
  Decoder d(small(4), DecoderTask::Public, 5, "pub");
  const auto r = rx(testutil::random_tensor({2, 3, 4, 4}, 6));
  CHECK(decode_public(d, r).class_logits.vec() == decode_public(d, r).class_logits.vec());
  CHECK_THROWS_AS(decode_public(d, rx(Tensor({1, 2, 4, 4}))), ConfigError);
  CHECK_THROWS_AS(decode_covert(d, r), ConfigError);
}

TEST_CASE("cross-entropy examples") {
  Tensor uniform({1, 4, 2, 3});
  std::vector<std::uint8_t> labels{0, 1, 2, 3, 0, 1};
  CHECK(public_loss(uniform, labels).value == doctest::Approx(std::log(4.0)).epsilon(1e-9));

  Tensor two({1, 2, 1, 2});
  std::vector<std::uint8_t> l2{0, 1};
  CHECK(public_loss(two, l2).value == doctest::Approx(std::numbers::ln2).epsilon(1e-9));

  Tensor sharp({1, 2, 1, 2});
  sharp.at(0, 0, 0, 0) = 60;
  sharp.at(0, 1, 0, 1) = 60;
  CHECK(public_loss(sharp, l2).value < 1e-12);
}

TEST_CASE("ignored pixels do not contribute") {
  Tensor logits({1, 2, 1, 2});
  logits.at(0, 0, 0, 0) = 3;
  std::vector<std::uint8_t> a{0, kIgnoreLabel};
  const auto l = public_loss(logits, a);
  CHECK(l.value == doctest::Approx(std::log(1.0 + std::exp(-3.0))).epsilon(1e-9));
  CHECK(l.grad.at(0, 0, 0, 1) == 0.0);
  CHECK(l.grad.at(0, 1, 0, 1) == 0.0);
  std::vector<std::uint8_t> none{kIgnoreLabel, kIgnoreLabel};
  CHECK_THROWS(public_loss(logits, none));
}

TEST_CASE("absolute error examples") {
  Tensor truth({1, 1, 1, 2});
  truth[0] = 0.5;
  truth[1] = 0.5;
  Tensor pred = truth;
  CHECK(covert_loss(pred, truth).value == 0.0);
  pred[0] = 0.6;
  pred[1] = 0.6;
  CHECK(covert_loss(pred, truth).value == doctest::Approx(0.1).epsilon(1e-6));
  pred[0] = 0.2;
  pred[1] = 0.8;
  CHECK(covert_loss(pred, truth).value == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("decoder weights are one parameter set regardless of path") {
  Decoder d(small(4), DecoderTask::Public, 7, "pub");
  const auto p1 = d.params(), p2 = d.params();
  CHECK(p1 == p2);
  CHECK(count_elements(p1) == 2 * (5 * 3 * 9 + 5 + 5 * 5 + 5 + 4 * 5 + 4));
}
