#include "covert/codec.hpp"

#include <cmath>
#include <string>

namespace covert {

void DecoderConfig::validate() const {
  if (in_channels <= 0 || hidden <= 0 || out_channels <= 0 || modules <= 0)
    throw ConfigError("DecoderConfig: sizes must be positive");
  if (static_cast<int>(dilations.size()) != modules)
    throw ConfigError("DecoderConfig: need one dilation per module");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("DecoderConfig: dropout must lie in [0,1)");
  if (output_hw[0] <= 0 || output_hw[1] <= 0)
    throw ConfigError("DecoderConfig: output size must be positive");
}

Decoder::Decoder(DecoderConfig config, DecoderTask task, std::uint64_t seed,
                 const std::string& prefix)
    : config_(std::move(config)), task_(task) {
  config_.validate();
  Rng rng = make_rng(seed, task == DecoderTask::Public ? 0xd0 : 0xd1);
  for (int m = 0; m < config_.modules; ++m) {
    const int r = config_.dilations[m];
    const std::string name = prefix + ".module" + std::to_string(m);
    Branch b{
        Conv2d(name + ".dilated", config_.in_channels, config_.hidden,
               kernels::ConvGeometry::square(3, 1, r, r)),
        Conv2d(name + ".mid", config_.hidden, config_.hidden,
               kernels::ConvGeometry::square(1, 1, 0)),
        Conv2d(name + ".out", config_.hidden, config_.out_channels,
               kernels::ConvGeometry::square(1, 1, 0)),
    };
    b.dilated.init_kaiming(rng);
    b.mid.init_kaiming(rng);
    b.out.init_kaiming(rng);
    branches_.push_back(std::move(b));
  }
}

ParamRefs Decoder::params() {
  ParamRefs out;
  for (auto& b : branches_) {
    b.dilated.collect(out);
    b.mid.collect(out);
    b.out.collect(out);
  }
  return out;
}

Tensor Decoder::forward(const Tensor& z, bool train, Rng* rng, Trace* trace) {
  if (z.shape().c != config_.in_channels)
    throw ConfigError("Decoder: input " + z.shape().str() + " expects " +
                      std::to_string(config_.in_channels) + " channels");
  if (trace) {
    trace->input = z;
    trace->branches.assign(branches_.size(), {});
  }
  Tensor sum;
  const Real inv_m = static_cast<Real>(1.0 / branches_.size());
  for (std::size_t m = 0; m < branches_.size(); ++m) {
    auto& b = branches_[m];
    BranchTrace bt;
    bt.a1 = relu(b.dilated.forward(z));
    bt.d1 = dropout(bt.a1, config_.dropout, train, rng, &bt.mask1);
    bt.a2 = relu(b.mid.forward(bt.d1));
    bt.d2 = dropout(bt.a2, config_.dropout, train, rng, &bt.mask2);
    Tensor o = b.out.forward(bt.d2);
    if (m == 0) {
      sum = std::move(o);
    } else {
      sum += o;
    }
    if (trace) trace->branches[m] = std::move(bt);
  }
  sum *= inv_m;
  Tensor up;
  kernels::upsample_bilinear_forward(sum, config_.output_hw[0],
                                     config_.output_hw[1], up);
  if (task_ == DecoderTask::Covert) up = sigmoid(up);
  if (trace) {
    trace->pre_upsample = sum.shape();
    trace->output = up;
  }
  return up;
}

Tensor Decoder::backward(const Trace& trace, const Tensor& dout) {
  Tensor g = task_ == DecoderTask::Covert ? sigmoid_backward(trace.output, dout)
                                          : dout;
  Tensor dsum;
  kernels::upsample_bilinear_backward(g, trace.pre_upsample, dsum);
  dsum *= static_cast<Real>(1.0 / branches_.size());
  Tensor dz(trace.input.shape());
  for (std::size_t m = 0; m < branches_.size(); ++m) {
    auto& b = branches_[m];
    const auto& bt = trace.branches[m];
    Tensor t = b.out.backward(bt.d2, dsum);
    t = dropout_backward(bt.mask2, t);
    t = relu_backward(bt.a2, t);
    t = b.mid.backward(bt.d1, t);
    t = dropout_backward(bt.mask1, t);
    t = relu_backward(bt.a1, t);
    dz += b.dilated.backward(trace.input, t);
  }
  return dz;
}

PublicPrediction decode_public(Decoder& dec, const ReceivedFeature& received) {
  if (dec.task() != DecoderTask::Public)
    throw ConfigError("decode_public: decoder is not the public decoder");
  return {dec.forward(received.data, false)};
}

CovertPrediction decode_covert(Decoder& dec, const ReceivedFeature& received) {
  if (dec.task() != DecoderTask::Covert)
    throw ConfigError("decode_covert: decoder is not the covert decoder");
  return {dec.forward(received.data, false)};
}

LossValue public_loss(const Tensor& class_logits,
                      std::span<const std::uint8_t> labels,
                      std::uint8_t ignore_index) {
  const Shape& s = class_logits.shape();
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  if (labels.size() != static_cast<std::size_t>(s.n) * hw)
    throw ConfigError("public_loss: label map does not match logits " + s.str());
  LossValue out;
  out.grad = Tensor(s);
  double total = 0.0;
  std::size_t valid = 0;
  std::vector<double> prob(s.c);
  for (int n = 0; n < s.n; ++n) {
    const Real* logit = class_logits.sample(n);
    Real* grad = out.grad.sample(n);
    for (std::size_t p = 0; p < hw; ++p) {
      const std::uint8_t y = labels[n * hw + p];
      if (y == ignore_index) continue;
      if (y >= s.c) throw ConfigError("public_loss: label out of range");
      double mx = -INFINITY;
      for (int c = 0; c < s.c; ++c) mx = std::max(mx, static_cast<double>(logit[c * hw + p]));
      double z = 0.0;
      for (int c = 0; c < s.c; ++c) {
        prob[c] = std::exp(logit[c * hw + p] - mx);
        z += prob[c];
      }
      total += -(logit[y * hw + p] - mx - std::log(z));
      for (int c = 0; c < s.c; ++c)
        grad[c * hw + p] = static_cast<Real>(prob[c] / z - (c == y ? 1.0 : 0.0));
      ++valid;
    }
  }
  if (valid == 0) throw std::invalid_argument("public_loss: all pixels ignored");
  out.value = total / static_cast<double>(valid);
  out.grad *= static_cast<Real>(1.0 / static_cast<double>(valid));
  return out;
}

LossValue covert_loss(const Tensor& pred, const Tensor& truth) {
  require_same_shape(pred, truth, "covert_loss");
  LossValue out;
  out.grad = Tensor(pred.shape());
  double total = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!(truth[i] >= Real(0))) continue;
    const double d = static_cast<double>(pred[i]) - truth[i];
    total += std::abs(d);
    out.grad[i] = static_cast<Real>(d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
    ++valid;
  }
  if (valid == 0) return out;
  out.value = total / static_cast<double>(valid);
  out.grad *= static_cast<Real>(1.0 / static_cast<double>(valid));
  return out;
}

}  // namespace covert
