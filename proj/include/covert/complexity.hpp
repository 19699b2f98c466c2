#pragma once

// Analytical FLOPs and parameter accounting.
//   C_l       = 2 K_l^2 C_in C_out H_l W_l
//   C_Enc^k   = sum_l u_l^k C_l
//   C_Dec^k'  = (K_de1^2 C_L D + K_de2^2 D C_k') H_L W_L   (D: decoder width)
//   C_Total   = sum_k C_Enc^k + M sum_k' C_Dec^k'

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "covert/codec.hpp"
#include "covert/encoder.hpp"

namespace covert {

struct CostReport {
  std::vector<double> per_block_flops;  // dense C_l for every block
  std::map<std::string, double> encoder_flops_by_path;
  std::map<std::string, double> decoder_flops_by_task;  // per module
  int modules = 1;
  double total_flops = 0.0;
  std::uint64_t encoder_params = 0;
  std::uint64_t decoder_params = 0;
  std::uint64_t param_count = 0;
};

/// 2 * K^2 * C_in * C_out * h * w, with (h, w) the block's output size.
double block_cost(const BlockSpec& spec, int h, int w);

/// Gated sum of block costs. Pinned blocks always count; soft gates throw.
double path_cost(const EncoderConfig& cfg, const GateVector& gates);

/// Single-module decoder cost for a decoder reading the encoder output.
double decoder_cost(const EncoderConfig& enc, const DecoderConfig& dec,
                    int first_kernel = 3, int second_kernel = 1);
/// The full-scale formula with its fixed 512/1024 widths.
double reference_decoder_cost(int k_de1, int k_de2, int c_out_last, int h, int w);

std::uint64_t block_params(const BlockSpec& spec);
std::uint64_t encoder_params(const EncoderConfig& cfg);
std::uint64_t decoder_params(const DecoderConfig& dec);

/// Shared backbone: both paths' gates applied to one parameter set.
CostReport system_cost(const EncoderConfig& enc, const GateVector& explicit_gates,
                       const GateVector& stego_gates,
                       const DecoderConfig& public_dec,
                       const DecoderConfig& covert_dec);
CostReport system_cost(const EncoderConfig& enc, const GatePolicy& policy,
                       const DecoderConfig& public_dec,
                       const DecoderConfig& covert_dec);

/// Two dense encoders with identical block specs (stacking baseline).
CostReport dual_encoder_cost(const EncoderConfig& enc,
                             const DecoderConfig& public_dec,
                             const DecoderConfig& covert_dec);

}  // namespace covert
