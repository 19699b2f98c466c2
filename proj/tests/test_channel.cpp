#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "covert/channel.hpp"
#include "grad_check.hpp"

using namespace covert;

namespace {

Tensor constant(Shape s, Real v) { return Tensor(s, v); }

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("noise variance examples") {
  const Tensor one = constant({1, 1, 4, 4}, 1);
  const Tensor two = constant({1, 1, 4, 4}, 2);
  CHECK(noise_variance_for_snr(one.vec(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(noise_variance_for_snr(one.vec(), 10.0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(noise_variance_for_snr(two.vec(), 3.0) == doctest::Approx(4.0 / std::pow(10.0, 0.3)).epsilon(1e-12));
  CHECK(noise_variance_for_snr(two.vec(), 3.0) == doctest::Approx(2.0050).epsilon(1e-4));
}

TEST_CASE("zero signal power is rejected") {
  const Tensor z({1, 1, 2, 2});
  try {
    noise_variance_for_snr(z.vec(), 3.0);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("zero signal power") != std::string::npos);
  }
}

TEST_CASE("noiseless AWGN is the identity") {
  const Tensor z = testutil::random_tensor({3, 4, 5, 5}, 1);
  ChannelConfig cfg;
  cfg.snr_db = kNoiselessSnr;
  const auto rx = transmit(z, cfg, 9);
  for (std::size_t i = 0; i < z.size(); ++i) REQUIRE(rx.data[i] == z[i]);
}

TEST_CASE("AWGN empirical noise variance") {
  const Tensor z = testutil::random_tensor({1, 1, 1000, 1000}, 2);
  ChannelConfig cfg;
  cfg.snr_db = 4.0;
  const double sigma2 = noise_variance_for_snr(z.vec(), cfg.snr_db);
  const auto rx = transmit(z, cfg, 3);
  double m = 0.0, s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double e = double(rx.data[i]) - z[i];
    m += e;
    s += e * e;
  }
  m /= z.size();
  const double var = s / z.size() - m * m;
  CHECK(std::abs(var / sigma2 - 1.0) < 0.02);
  CHECK(std::abs(m) < 0.01);
  CHECK(rx.realized_snr_db == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("fading second moments") {
  Rng rng(4);
  ChannelConfig ray;
  ray.family = ChannelFamily::Rayleigh;
  ChannelConfig nak;
  nak.family = ChannelFamily::Nakagami;
  nak.nakagami_m = 2.5;
  nak.nakagami_omega = 1.7;
  double sr = 0.0, sn = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double hr = sample_fading_gain(ray, rng);
    const double hn = sample_fading_gain(nak, rng);
    sr += hr * hr;
    sn += hn * hn;
  }
  CHECK(std::abs(sr / n - 1.0) < 0.02);
  CHECK(std::abs(sn / n / 1.7 - 1.0) < 0.02);
}

TEST_CASE("Nakagami with m = 1 matches Rayleigh") {
  ChannelConfig nak;
  nak.family = ChannelFamily::Nakagami;
  Rng rng(5);
  std::normal_distribution<double> half(0.0, std::sqrt(0.5));
  const int n = 100000;
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = sample_fading_gain(nak, rng);
    const double x = half(rng), y = half(rng);
    b[i] = std::hypot(x, y);
  }
  CHECK(two_sample_ks(a, b) < 0.01);
}

TEST_CASE("AWGN has unit gain and fading gains are recorded per sample") {
  const Tensor z = testutil::random_tensor({4, 2, 3, 3}, 6);
  ChannelConfig cfg;
  auto rx = transmit(z, cfg, 1);
  REQUIRE(rx.realized_gain.size() == 4);
  for (double h : rx.realized_gain) CHECK(h == 1.0);

  cfg.family = ChannelFamily::Rayleigh;
  cfg.snr_db = kNoiselessSnr;
  rx = transmit(z, cfg, 1);
  REQUIRE(rx.realized_gain.size() == 4);
  const std::size_t per = z.size() / 4;
  for (std::size_t i = 0; i < z.size(); ++i)
    CHECK(rx.data[i] == doctest::Approx(rx.realized_gain[i / per] * z[i]).epsilon(1e-6));
}

TEST_CASE("transmission is deterministic under a fixed seed") {
  const Tensor z = testutil::random_tensor({2, 3, 4, 4}, 7);
  ChannelConfig cfg;
  cfg.family = ChannelFamily::Rayleigh;
  const auto a = transmit(z, cfg, 11), b = transmit(z, cfg, 11), c = transmit(z, cfg, 12);
  CHECK(a.data.vec() == b.data.vec());
  CHECK(a.data.vec() != c.data.vec());
}

TEST_CASE("channel gradient is the realized gain") {
  const Tensor z = testutil::random_tensor({2, 3, 4, 4}, 8);
  ChannelConfig cfg;
  cfg.family = ChannelFamily::Rayleigh;
  const auto rx = transmit(z, cfg, 13);
  const Tensor dy = testutil::random_tensor(z.shape(), 9);
  const Tensor dz = transmit_backward(rx, dy);
  const std::size_t per = z.size() / 2;
  for (std::size_t i = 0; i < z.size(); ++i)
    CHECK(dz[i] == doctest::Approx(rx.realized_gain[i / per] * dy[i]).epsilon(1e-9));
}

TEST_CASE("power normalisation gives unit mean power per sample") {
  Tensor z = testutil::random_tensor({3, 2, 4, 4}, 10);
  for (std::size_t i = 0; i < 32; ++i) z[i] *= 7;
  const auto pn = power_normalize(z);
  const std::size_t per = z.size() / 3;
  for (int n = 0; n < 3; ++n) {
    double p = 0.0;
    for (std::size_t i = 0; i < per; ++i) p += double(pn.data[n * per + i]) * pn.data[n * per + i];
    CHECK(p / per == doctest::Approx(1.0).epsilon(1e-9));
  }

  const Tensor dy = testutil::random_tensor(z.shape(), 11);
  const Tensor dz = power_normalize_backward(pn, dy);
  const double err = testutil::max_rel_error(z, dz, [&] { return testutil::dot(power_normalize(z).data, dy); });
  CHECK(err < 1e-5);
}

TEST_CASE("invalid channel configurations") {
  ChannelConfig cfg;
  cfg.family = ChannelFamily::Nakagami;
  cfg.nakagami_m = 0.3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.nakagami_m = 1.0;
  cfg.nakagami_omega = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(parse_channel_family("rician"), ConfigError);
  CHECK(parse_channel_family(to_string(ChannelFamily::Rayleigh)) == ChannelFamily::Rayleigh);
}
