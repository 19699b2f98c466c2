#include "covert/complexity.hpp"

namespace covert {

double block_cost(const BlockSpec& spec, int h, int w) {
  const double k = spec.kernel_size;
  return 2.0 * k * k * spec.in_channels * spec.out_channels *
         static_cast<double>(h) * w;
}

double path_cost(const EncoderConfig& cfg, const GateVector& gates) {
  if (gates.mode != GateMode::Hard)
    throw ConfigError("path_cost: hard gates required");
  gates.validate();
  if (static_cast<int>(gates.size()) != cfg.num_blocks())
    throw ConfigError("path_cost: one gate per block required");
  const auto hw = cfg.block_output_hw();
  double total = 0.0;
  for (int l = 0; l < cfg.num_blocks(); ++l) {
    const auto& b = cfg.blocks[l];
    if (b.skippable && gates[l] == 0.0) continue;
    total += block_cost(b, hw[l].first, hw[l].second);
  }
  return total;
}

double decoder_cost(const EncoderConfig& enc, const DecoderConfig& dec,
                    int first_kernel, int second_kernel) {
  const double h = enc.output_shape[1], w = enc.output_shape[2];
  const double c = enc.output_shape[0];
  return (static_cast<double>(first_kernel) * first_kernel * c * dec.hidden +
          static_cast<double>(second_kernel) * second_kernel * dec.hidden *
              dec.out_channels) *
         h * w;
}

double reference_decoder_cost(int k_de1, int k_de2, int c_out_last, int h, int w) {
  return (static_cast<double>(k_de1) * k_de1 * 512 * 1024 +
          static_cast<double>(k_de2) * k_de2 * 1024 * c_out_last) *
         static_cast<double>(h) * w;
}

std::uint64_t block_params(const BlockSpec& b) {
  const std::uint64_t k2 = static_cast<std::uint64_t>(b.kernel_size) * b.kernel_size;
  const std::uint64_t ci = b.in_channels, co = b.out_channels;
  // conv1 + bias, bn1, conv2 + bias, bn2
  return k2 * ci * co + co + 2 * co + k2 * co * co + co + 2 * co;
}

std::uint64_t encoder_params(const EncoderConfig& cfg) {
  std::uint64_t n = 0;
  for (const auto& b : cfg.blocks) n += block_params(b);
  return n;
}

std::uint64_t decoder_params(const DecoderConfig& d) {
  const std::uint64_t ci = d.in_channels, h = d.hidden, o = d.out_channels;
  const std::uint64_t module = 9 * ci * h + h + h * h + h + h * o + o;
  return module * static_cast<std::uint64_t>(d.modules);
}

namespace {

CostReport assemble(const EncoderConfig& enc, double exp_flops, double ste_flops,
                    std::uint64_t enc_params, const DecoderConfig& pub,
                    const DecoderConfig& cov) {
  if (pub.modules != cov.modules)
    throw ConfigError("system_cost: decoders must share the module count M");
  CostReport r;
  const auto hw = enc.block_output_hw();
  for (int l = 0; l < enc.num_blocks(); ++l)
    r.per_block_flops.push_back(block_cost(enc.blocks[l], hw[l].first, hw[l].second));
  r.encoder_flops_by_path[to_string(PathId::Explicit)] = exp_flops;
  r.encoder_flops_by_path[to_string(PathId::Stego)] = ste_flops;
  r.decoder_flops_by_task["public"] = decoder_cost(enc, pub);
  r.decoder_flops_by_task["covert"] = decoder_cost(enc, cov);
  r.modules = pub.modules;
  double dec = 0.0;
  for (const auto& [task, f] : r.decoder_flops_by_task) dec += f;
  r.total_flops = exp_flops + ste_flops + r.modules * dec;
  r.encoder_params = enc_params;
  r.decoder_params = decoder_params(pub) + decoder_params(cov);
  r.param_count = r.encoder_params + r.decoder_params;
  return r;
}

}  // namespace

CostReport system_cost(const EncoderConfig& enc, const GateVector& explicit_gates,
                       const GateVector& stego_gates,
                       const DecoderConfig& public_dec,
                       const DecoderConfig& covert_dec) {
  return assemble(enc, path_cost(enc, explicit_gates), path_cost(enc, stego_gates),
                  encoder_params(enc), public_dec, covert_dec);
}

CostReport system_cost(const EncoderConfig& enc, const GatePolicy& policy,
                       const DecoderConfig& public_dec,
                       const DecoderConfig& covert_dec) {
  return system_cost(enc, hard_gates(policy, PathId::Explicit),
                     hard_gates(policy, PathId::Stego), public_dec, covert_dec);
}

CostReport dual_encoder_cost(const EncoderConfig& enc,
                             const DecoderConfig& public_dec,
                             const DecoderConfig& covert_dec) {
  const GateVector dense = GateVector::ones(enc.num_blocks());
  const double f = path_cost(enc, dense);
  return assemble(enc, f, f, 2 * encoder_params(enc), public_dec, covert_dec);
}

}  // namespace covert
