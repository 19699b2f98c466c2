#include "covert/channel.hpp"

#include <cmath>

namespace covert {

ChannelFamily parse_channel_family(const std::string& s) {
  if (s == "awgn" || s == "AWGN") return ChannelFamily::AWGN;
  if (s == "rayleigh" || s == "Rayleigh") return ChannelFamily::Rayleigh;
  if (s == "nakagami" || s == "Nakagami") return ChannelFamily::Nakagami;
  throw ConfigError("unknown channel family '" + s + "'");
}

std::string to_string(ChannelFamily f) {
  switch (f) {
    case ChannelFamily::AWGN: return "awgn";
    case ChannelFamily::Rayleigh: return "rayleigh";
    case ChannelFamily::Nakagami: return "nakagami";
  }
  return "?";
}

void ChannelConfig::validate() const {
  if (std::isnan(snr_db)) throw ConfigError("channel: SNR is NaN");
  if (family == ChannelFamily::Nakagami) {
    if (!(nakagami_m >= 0.5)) throw ConfigError("channel: nakagami_m must be >= 0.5");
    if (!(nakagami_omega > 0.0))
      throw ConfigError("channel: nakagami_omega must be positive");
  }
}

double noise_variance_for_snr(std::span<const Real> z, double snr_db) {
  if (z.empty()) throw ConfigError("noise_variance_for_snr: empty feature map");
  double power = 0.0;
  for (Real v : z) power += static_cast<double>(v) * v;
  power /= static_cast<double>(z.size());
  if (power == 0.0) throw std::domain_error("zero signal power");
  return power / std::pow(10.0, snr_db / 10.0);
}

double sample_fading_gain(const ChannelConfig& cfg, Rng& rng) {
  switch (cfg.family) {
    case ChannelFamily::AWGN:
      return 1.0;
    case ChannelFamily::Rayleigh: {
      // |CN(0,1)|: real and imaginary parts each N(0, 1/2).
      std::normal_distribution<double> n(0.0, std::sqrt(0.5));
      const double re = n(rng), im = n(rng);
      return std::sqrt(re * re + im * im);
    }
    case ChannelFamily::Nakagami: {
      std::gamma_distribution<double> g(cfg.nakagami_m,
                                        cfg.nakagami_omega / cfg.nakagami_m);
      return std::sqrt(g(rng));
    }
  }
  return 1.0;
}

ReceivedFeature transmit(const Tensor& z, const ChannelConfig& cfg,
                         std::uint64_t rng_seed) {
  cfg.validate();
  Rng rng = make_rng(rng_seed, 0xc4);
  ReceivedFeature rx;
  rx.data = Tensor(z.shape());
  const Shape& s = z.shape();
  const std::size_t per = s.sample_size();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const bool noiseless = std::isinf(cfg.snr_db) && cfg.snr_db > 0;
  std::normal_distribution<double> unit(0.0, 1.0);
  double snr_sum = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const Real* src = z.sample(n);
    Real* dst = rx.data.sample(n);
    std::vector<double> gains;
    if (cfg.fading_granularity == FadingGranularity::PerChannel) {
      for (int c = 0; c < s.c; ++c) gains.push_back(sample_fading_gain(cfg, rng));
    } else {
      gains.push_back(sample_fading_gain(cfg, rng));
    }
    rx.realized_gain.insert(rx.realized_gain.end(), gains.begin(), gains.end());
    for (std::size_t i = 0; i < per; ++i) {
      const double h = gains.size() == 1 ? gains[0] : gains[i / plane];
      dst[i] = static_cast<Real>(h * src[i]);
    }
    if (noiseless) {
      snr_sum += cfg.snr_db;
      continue;
    }
    const double var = noise_variance_for_snr(std::span<const Real>(src, per), cfg.snr_db);
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < per; ++i)
      dst[i] += static_cast<Real>(sd * unit(rng));
    snr_sum += cfg.snr_db;
  }
  rx.realized_snr_db = s.n > 0 ? snr_sum / s.n : cfg.snr_db;
  return rx;
}

ReceivedFeature transmit(const FeatureMap& z, const ChannelConfig& cfg,
                         std::uint64_t rng_seed) {
  return transmit(z.data, cfg, rng_seed);
}

Tensor transmit_backward(const ReceivedFeature& rx, const Tensor& dreceived) {
  const Shape& s = dreceived.shape();
  Tensor dz(s);
  const std::size_t per = s.sample_size();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t gains_per_sample = rx.realized_gain.size() / std::max(1, s.n);
  for (int n = 0; n < s.n; ++n) {
    const double* gains = rx.realized_gain.data() + n * gains_per_sample;
    const Real* g = dreceived.sample(n);
    Real* out = dz.sample(n);
    for (std::size_t i = 0; i < per; ++i) {
      const double h = gains_per_sample == 1 ? gains[0] : gains[i / plane];
      out[i] = static_cast<Real>(h * g[i]);
    }
  }
  return dz;
}

PowerNormalized power_normalize(const Tensor& z) {
  PowerNormalized out;
  out.data = z;
  const Shape& s = z.shape();
  const std::size_t per = s.sample_size();
  for (int n = 0; n < s.n; ++n) {
    Real* p = out.data.sample(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < per; ++i) sq += static_cast<double>(p[i]) * p[i];
    if (sq == 0.0) throw std::domain_error("zero signal power");
    const double rms = std::sqrt(sq / static_cast<double>(per));
    out.rms.push_back(rms);
    for (std::size_t i = 0; i < per; ++i) p[i] = static_cast<Real>(p[i] / rms);
  }
  return out;
}

Tensor power_normalize_backward(const PowerNormalized& fwd, const Tensor& dy) {
  require_same_shape(fwd.data, dy, "power_normalize_backward");
  const Shape& s = dy.shape();
  const std::size_t per = s.sample_size();
  Tensor dz(s);
  for (int n = 0; n < s.n; ++n) {
    const Real* y = fwd.data.sample(n);
    const Real* g = dy.sample(n);
    Real* out = dz.sample(n);
    double gy = 0.0;
    for (std::size_t i = 0; i < per; ++i) gy += static_cast<double>(g[i]) * y[i];
    gy /= static_cast<double>(per);
    for (std::size_t i = 0; i < per; ++i)
      out[i] = static_cast<Real>((g[i] - y[i] * gy) / fwd.rms[n]);
  }
  return dz;
}

}  // namespace covert
