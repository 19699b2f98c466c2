#pragma once

// Wireless channel applied to transmitted feature maps: z_hat = h * z + eta,
// eta ~ N(0, sigma^2) with sigma^2 = mean(z^2) / 10^(snr_db / 10).

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "covert/encoder.hpp"

namespace covert {

enum class ChannelFamily { AWGN, Rayleigh, Nakagami };
enum class FadingGranularity { PerFeatureMap, PerChannel };

ChannelFamily parse_channel_family(const std::string& s);
std::string to_string(ChannelFamily f);

/// SNR value that disables additive noise entirely.
inline constexpr double kNoiselessSnr = std::numeric_limits<double>::infinity();

struct ChannelConfig {
  ChannelFamily family = ChannelFamily::AWGN;
  double snr_db = 6.0;
  double nakagami_m = 1.0;
  double nakagami_omega = 1.0;
  FadingGranularity fading_granularity = FadingGranularity::PerFeatureMap;

  void validate() const;
};

struct ReceivedFeature {
  Tensor data;
  std::vector<double> realized_gain;  // h for each sample (and channel)
  double realized_snr_db = 0.0;       // mean over the batch
};

/// sigma^2 for one feature map given its mean power. Throws on zero power.
double noise_variance_for_snr(std::span<const Real> z, double snr_db);

/// One fading magnitude draw for the configured family.
double sample_fading_gain(const ChannelConfig& cfg, Rng& rng);

/// Applies the channel to every sample of a batch independently. Signal
/// power is measured per sample feature map.
ReceivedFeature transmit(const FeatureMap& z, const ChannelConfig& cfg,
                         std::uint64_t rng_seed);
ReceivedFeature transmit(const Tensor& z, const ChannelConfig& cfg,
                         std::uint64_t rng_seed);

/// Backward pass: dL/dz = h * dL/dz_hat (fading and noise held constant).
Tensor transmit_backward(const ReceivedFeature& rx, const Tensor& dreceived);

/// Scales every sample to unit mean power before transmission, so the
/// transmitter's power is the same whatever the features carry.
struct PowerNormalized {
  Tensor data;
  std::vector<double> rms;  // per-sample sqrt(mean(z^2)) before scaling
};
PowerNormalized power_normalize(const Tensor& z);
Tensor power_normalize_backward(const PowerNormalized& fwd, const Tensor& dy);

}  // namespace covert
