#include "covert/encoder.hpp"

#include <string>

namespace covert {

void BlockSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || kernel_size <= 0 || stride <= 0)
    throw ConfigError("BlockSpec " + std::to_string(index) +
                      ": dimensions must be positive");
  if (kernel_size % 2 == 0)
    throw ConfigError("BlockSpec " + std::to_string(index) +
                      ": kernel size must be odd");
  if (skippable && (in_channels != out_channels || stride != 1))
    throw ConfigError("BlockSpec " + std::to_string(index) +
                      ": skippable block must preserve shape");
}

EncoderConfig EncoderConfig::staged(std::array<int, 3> input_shape,
                                    const std::vector<int>& stage_channels,
                                    const std::vector<int>& stage_strides,
                                    int blocks_per_stage, int kernel_size) {
  if (stage_channels.size() != stage_strides.size() || stage_channels.empty())
    throw ConfigError("EncoderConfig: stage channel/stride lists differ");
  if (blocks_per_stage <= 0)
    throw ConfigError("EncoderConfig: blocks_per_stage must be positive");
  EncoderConfig cfg;
  cfg.input_shape = input_shape;
  int c = input_shape[0], h = input_shape[1], w = input_shape[2];
  const int pad = kernel_size / 2;
  for (std::size_t s = 0; s < stage_channels.size(); ++s) {
    for (int b = 0; b < blocks_per_stage; ++b) {
      BlockSpec spec;
      spec.index = static_cast<int>(cfg.blocks.size());
      spec.in_channels = c;
      spec.out_channels = stage_channels[s];
      spec.kernel_size = kernel_size;
      spec.stride = b == 0 ? stage_strides[s] : 1;
      spec.skippable = spec.in_channels == spec.out_channels && spec.stride == 1;
      cfg.blocks.push_back(spec);
      c = spec.out_channels;
      h = (h + 2 * pad - kernel_size) / spec.stride + 1;
      w = (w + 2 * pad - kernel_size) / spec.stride + 1;
    }
  }
  cfg.output_shape = {c, h, w};
  cfg.validate();
  return cfg;
}

std::vector<bool> EncoderConfig::learnable_mask() const {
  std::vector<bool> m;
  for (const auto& b : blocks) m.push_back(b.skippable);
  return m;
}

std::vector<std::pair<int, int>> EncoderConfig::block_output_hw() const {
  std::vector<std::pair<int, int>> out;
  int h = input_shape[1], w = input_shape[2];
  for (const auto& b : blocks) {
    const int pad = b.kernel_size / 2;
    h = (h + 2 * pad - b.kernel_size) / b.stride + 1;
    w = (w + 2 * pad - b.kernel_size) / b.stride + 1;
    out.emplace_back(h, w);
  }
  return out;
}

void EncoderConfig::validate() const {
  if (blocks.empty()) throw ConfigError("EncoderConfig: no blocks");
  int c = input_shape[0];
  for (const auto& b : blocks) {
    b.validate();
    if (b.in_channels != c)
      throw ConfigError("EncoderConfig: block " + std::to_string(b.index) +
                        " input channels do not compose");
    c = b.out_channels;
  }
  const auto hw = block_output_hw();
  if (c != output_shape[0] || hw.back().first != output_shape[1] ||
      hw.back().second != output_shape[2])
    throw ConfigError("EncoderConfig: declared output shape does not match blocks");
}

ResidualBlock::ResidualBlock(const BlockSpec& spec, Rng& rng) : spec_(spec) {
  const std::string name = "block" + std::to_string(spec.index);
  const int pad = spec.kernel_size / 2;
  conv1 = Conv2d(name + ".conv1", spec.in_channels, spec.out_channels,
                 kernels::ConvGeometry::square(spec.kernel_size, spec.stride, pad));
  bn1 = BatchNorm2d(name + ".bn1", spec.out_channels);
  conv2 = Conv2d(name + ".conv2", spec.out_channels, spec.out_channels,
                 kernels::ConvGeometry::square(spec.kernel_size, 1, pad));
  bn2 = BatchNorm2d(name + ".bn2", spec.out_channels);
  conv1.init_kaiming(rng);
  conv2.init_kaiming(rng);
}

Tensor ResidualBlock::transfer(const Tensor& x, bool train, Cache* cache) {
  BatchNorm2d::Cache c1, c2;
  Tensor h = bn1.forward(conv1.forward(x), train, &c1);
  Tensor a1 = relu(h);
  Tensor f = bn2.forward(conv2.forward(a1), train, &c2);
  if (cache) {
    cache->x = x;
    cache->bn1 = std::move(c1);
    cache->a1 = std::move(a1);
    cache->bn2 = std::move(c2);
    cache->f = f;
  }
  return f;
}

Tensor ResidualBlock::transfer_backward(const Cache& cache, const Tensor& df) {
  Tensor g = bn2.backward(cache.bn2, df);
  g = conv2.backward(cache.a1, g);
  g = relu_backward(cache.a1, g);
  g = bn1.backward(cache.bn1, g);
  return conv1.backward(cache.x, g);
}

void ResidualBlock::collect(ParamRefs& out) {
  conv1.collect(out);
  bn1.collect(out);
  conv2.collect(out);
  bn2.collect(out);
}

Encoder::Encoder(EncoderConfig config, std::uint64_t seed,
                 const std::string& prefix)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng = make_rng(seed, 0xe1);
  for (const auto& spec : config_.blocks) blocks_.emplace_back(spec, rng);
  for (auto* p : params()) p->name = prefix + "." + p->name;
}

ParamRefs Encoder::params() {
  ParamRefs out;
  for (auto& b : blocks_) b.collect(out);
  return out;
}

FeatureMap Encoder::forward_path(const Tensor& input, const GateVector& gates,
                                 PathId path, bool train, Trace* trace) {
  const auto& in = config_.input_shape;
  if (input.shape().c != in[0] || input.shape().h != in[1] ||
      input.shape().w != in[2])
    throw ConfigError("Encoder: input shape " + input.shape().str() +
                      " does not match configuration");
  if (static_cast<int>(gates.size()) != config_.num_blocks())
    throw ConfigError("Encoder: gate vector length mismatch");

  if (trace) {
    trace->caches.assign(blocks_.size(), {});
    trace->gates.assign(blocks_.size(), 1.0);
    trace->executed.assign(blocks_.size(), false);
  }
  Tensor k = input;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    auto& block = blocks_[l];
    ResidualBlock::Cache* cache = trace ? &trace->caches[l] : nullptr;
    if (!block.spec().skippable) {
      k = block.transfer(k, train, cache);
      if (trace) trace->executed[l] = true;
    } else {
      const double u = gates[l];
      if (trace) trace->gates[l] = u;
      if (u != 0.0) {
        Tensor f = block.transfer(k, train, cache);
        const Real ur = static_cast<Real>(u);
        for (std::size_t i = 0; i < k.size(); ++i) k[i] += ur * f[i];
        if (trace) trace->executed[l] = true;
      }
    }
    if (!k.all_finite())
      throw NumericalError("Encoder: non-finite activation after block " +
                               std::to_string(l),
                           static_cast<int>(l));
  }
  return FeatureMap{std::move(k), path};
}

Tensor Encoder::backward(const Trace& trace, const Tensor& dz,
                         std::vector<double>* dgates, bool need_input_grad) {
  if (dgates) dgates->assign(blocks_.size(), 0.0);
  Tensor g = dz;
  for (int l = static_cast<int>(blocks_.size()) - 1; l >= 0; --l) {
    auto& block = blocks_[l];
    if (!trace.executed[l]) continue;  // identity
    const auto& cache = trace.caches[l];
    if (!block.spec().skippable) {
      if (l == 0 && !need_input_grad) {
        // Still need parameter gradients of the first block.
        block.transfer_backward(cache, g);
        return {};
      }
      g = block.transfer_backward(cache, g);
      continue;
    }
    const double u = trace.gates[l];
    if (dgates) {
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i)
        dot += static_cast<double>(g[i]) * cache.f[i];
      (*dgates)[l] = dot;
    }
    Tensor gf = g;
    gf *= static_cast<Real>(u);
    Tensor gx = block.transfer_backward(cache, gf);
    g += gx;
  }
  return g;
}

int Encoder::executed_blocks(const EncoderConfig& cfg, const GateVector& gates) {
  int n = 0;
  for (int l = 0; l < cfg.num_blocks(); ++l)
    if (!cfg.blocks[l].skippable || gates[l] != 0.0) ++n;
  return n;
}

FeatureMap encode_for_transmission(Encoder& encoder, const Tensor& input,
                                   bool covert_requested,
                                   const GatePolicy& policy, GateMode mode,
                                   std::uint64_t rng_seed, bool train) {
  const PathId path = covert_requested ? PathId::Stego : PathId::Explicit;
  const GateVector gates = mode == GateMode::Soft
                               ? sample_soft_gates(policy, path, rng_seed).gates
                               : hard_gates(policy, path);
  return encoder.forward_path(input, gates, path, train);
}

}  // namespace covert
