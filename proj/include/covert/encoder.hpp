#pragma once

// Gated residual backbone shared by the Explicit and Stego paths.
//
// For block l with input k_{l-1}:
//   skippable blocks:      k_l = u_l * F_l(k_{l-1}) + k_{l-1}
//   shape-changing blocks: k_l = F_l(k_{l-1})          (gate pinned to 1)
// with F_l = conv3x3(stride) -> BN -> ReLU -> conv3x3 -> BN.

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "covert/gating.hpp"
#include "covert/layers.hpp"

namespace covert {

struct BlockSpec {
  int index = 0;  // 0-based position in the stack
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 3;
  int stride = 1;
  bool skippable = true;

  void validate() const;
};

struct EncoderConfig {
  std::vector<BlockSpec> blocks;
  std::array<int, 3> input_shape{};   // C, H, W
  std::array<int, 3> output_shape{};  // C, H, W

  /// Stage layout: each stage opens with a (possibly shape-changing) entry
  /// block followed by identity-shaped blocks. A block is skippable exactly
  /// when its input and output shapes agree.
  static EncoderConfig staged(std::array<int, 3> input_shape,
                              const std::vector<int>& stage_channels,
                              const std::vector<int>& stage_strides,
                              int blocks_per_stage, int kernel_size = 3);

  int num_blocks() const { return static_cast<int>(blocks.size()); }
  std::vector<bool> learnable_mask() const;
  /// Spatial size (H, W) of each block's output.
  std::vector<std::pair<int, int>> block_output_hw() const;
  void validate() const;
};

struct FeatureMap {
  Tensor data;  // (N, C_out, H_out, W_out)
  PathId path = PathId::Explicit;
};

class ResidualBlock {
 public:
  struct Cache {
    Tensor x;
    BatchNorm2d::Cache bn1;
    Tensor a1;
    BatchNorm2d::Cache bn2;
    Tensor f;
  };

  ResidualBlock(const BlockSpec& spec, Rng& rng);

  Tensor transfer(const Tensor& x, bool train, Cache* cache);
  Tensor transfer_backward(const Cache& cache, const Tensor& df);
  void collect(ParamRefs& out);
  const BlockSpec& spec() const { return spec_; }

  Conv2d conv1;
  BatchNorm2d bn1;
  Conv2d conv2;
  BatchNorm2d bn2;

 private:
  BlockSpec spec_;
};

class Encoder {
 public:
  struct Trace {
    std::vector<ResidualBlock::Cache> caches;
    std::vector<double> gates;
    std::vector<bool> executed;
  };

  Encoder(EncoderConfig config, std::uint64_t seed, const std::string& prefix = "enc");

  /// Gates for pinned (shape-changing) blocks are treated as 1. A hard gate
  /// of exactly 0 skips the block's computation entirely.
  FeatureMap forward_path(const Tensor& input, const GateVector& gates,
                          PathId path, bool train, Trace* trace = nullptr);

  /// Backpropagates dL/dz through a recorded pass. Weight gradients are
  /// accumulated; `dgates` (one entry per block) receives dL/du_l.
  Tensor backward(const Trace& trace, const Tensor& dz,
                  std::vector<double>* dgates = nullptr,
                  bool need_input_grad = false);

  ParamRefs params();
  const EncoderConfig& config() const { return config_; }
  std::vector<ResidualBlock>& blocks() { return blocks_; }
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }

  /// Executed blocks under hard gates (pinned blocks always count).
  static int executed_blocks(const EncoderConfig& cfg, const GateVector& gates);

 private:
  EncoderConfig config_;
  std::vector<ResidualBlock> blocks_;
};

/// Explicit path when no covert payload is requested, Stego path otherwise.
/// Soft mode draws Gumbel-Softmax gates with `rng_seed`; hard mode thresholds
/// the logits.
FeatureMap encode_for_transmission(Encoder& encoder, const Tensor& input,
                                   bool covert_requested,
                                   const GatePolicy& policy, GateMode mode,
                                   std::uint64_t rng_seed = 0,
                                   bool train = false);

}  // namespace covert
