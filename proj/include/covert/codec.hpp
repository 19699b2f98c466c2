#pragma once

// Task decoders and task losses. The public decoder is a single parameter
// set applied to features from either encoder path.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "covert/channel.hpp"

namespace covert {

inline constexpr std::uint8_t kIgnoreLabel = 255;

struct DecoderConfig {
  int in_channels = 64;
  int hidden = 64;
  int out_channels = 4;
  int modules = 2;                 // M parallel decoding modules, averaged
  std::vector<int> dilations{1, 2};  // one per module
  double dropout = 0.1;
  std::array<int, 2> output_hw{64, 64};

  void validate() const;
};

enum class DecoderTask { Public, Covert };

struct PublicPrediction {
  Tensor class_logits;  // (N, classes, H_in, W_in)
};

struct CovertPrediction {
  Tensor depth;  // (N, 1, H_in, W_in), in (0, 1)
};

class Decoder {
 public:
  struct Branch {
    Conv2d dilated;
    Conv2d mid;
    Conv2d out;
  };
  struct BranchTrace {
    Tensor a1, mask1, d1, a2, mask2, d2;
  };
  struct Trace {
    Tensor input;
    std::vector<BranchTrace> branches;
    Shape pre_upsample;
    Tensor output;  // after the task head (sigmoid for covert)
  };

  Decoder(DecoderConfig config, DecoderTask task, std::uint64_t seed,
          const std::string& prefix);

  /// Output at input resolution; covert outputs pass through a sigmoid.
  Tensor forward(const Tensor& z, bool train, Rng* rng = nullptr,
                 Trace* trace = nullptr);
  /// Returns dL/dz; accumulates parameter gradients.
  Tensor backward(const Trace& trace, const Tensor& dout);

  ParamRefs params();
  const DecoderConfig& config() const { return config_; }
  DecoderTask task() const { return task_; }
  std::vector<Branch>& branches() { return branches_; }

 private:
  DecoderConfig config_;
  DecoderTask task_;
  std::vector<Branch> branches_;
};

PublicPrediction decode_public(Decoder& dec, const ReceivedFeature& received);
CovertPrediction decode_covert(Decoder& dec, const ReceivedFeature& received);

struct LossValue {
  double value = 0.0;
  Tensor grad;  // dL/d(prediction)
};

/// Mean pixelwise cross-entropy over non-ignored pixels. `labels` holds
/// N*H*W entries aligned with the logits' batch and spatial layout.
LossValue public_loss(const Tensor& class_logits,
                      std::span<const std::uint8_t> labels,
                      std::uint8_t ignore_index = kIgnoreLabel);

/// Mean absolute error over pixels whose truth is non-negative.
LossValue covert_loss(const Tensor& pred, const Tensor& truth);

}  // namespace covert
