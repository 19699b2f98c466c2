#include "covert/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace covert {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 0) throw ConfigError("ConfusionMatrix: negative class count");
}

void ConfusionMatrix::add(std::span<const std::uint8_t> pred,
                          std::span<const std::uint8_t> truth,
                          std::uint8_t ignore_index) {
  if (pred.size() != truth.size())
    throw ConfigError("segmentation: prediction and truth sizes differ");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == ignore_index) continue;
    if (truth[i] >= num_classes_ || pred[i] >= num_classes_)
      throw ConfigError("segmentation: class id out of range");
    ++counts_[static_cast<std::size_t>(truth[i]) * num_classes_ + pred[i]];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_)
    throw ConfigError("ConfusionMatrix::merge: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

SegScore ConfusionMatrix::score() const {
  const std::uint64_t all = total();
  if (all == 0) throw std::invalid_argument("segmentation: no valid pixels");
  std::uint64_t correct = 0;
  double iou_sum = 0.0;
  int present = 0;
  for (int k = 0; k < num_classes_; ++k) {
    const std::uint64_t tp = count(k, k);
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < num_classes_; ++j) {
      row += count(k, j);
      col += count(j, k);
    }
    correct += tp;
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;  // absent from truth and prediction
    iou_sum += static_cast<double>(tp) / static_cast<double>(uni);
    ++present;
  }
  return {iou_sum / present, static_cast<double>(correct) / static_cast<double>(all)};
}

SegScore segmentation_score(std::span<const std::uint8_t> pred,
                            std::span<const std::uint8_t> truth,
                            int num_classes, std::uint8_t ignore_index) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, truth, ignore_index);
  return cm.score();
}

void DepthAccumulator::add(std::span<const Real> pred, std::span<const Real> truth,
                           double eps) {
  if (pred.size() != truth.size())
    throw ConfigError("depth_score: prediction and truth sizes differ");
  const double t1 = 1.25, t2 = t1 * t1, t3 = t2 * t1;
  seen_ += truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double gt = truth[i];
    if (!std::isfinite(gt) || !(gt > eps)) continue;
    const double d = std::max(static_cast<double>(pred[i]), eps);
    const double err = std::abs(static_cast<double>(pred[i]) - gt);
    abs_sum_ += err;
    rel_sum_ += err / gt;
    const double ratio = std::max(d / gt, gt / d);
    if (ratio < t1) ++hits_[0];
    if (ratio < t2) ++hits_[1];
    if (ratio < t3) ++hits_[2];
    ++valid_;
  }
}

void DepthAccumulator::merge(const DepthAccumulator& o) {
  abs_sum_ += o.abs_sum_;
  rel_sum_ += o.rel_sum_;
  for (int k = 0; k < 3; ++k) hits_[k] += o.hits_[k];
  valid_ += o.valid_;
  seen_ += o.seen_;
}

DepthScore DepthAccumulator::score() const {
  if (valid_ == 0) throw std::invalid_argument("depth_score: no valid pixels");
  const double n = static_cast<double>(valid_);
  DepthScore s;
  s.abs_err = abs_sum_ / n;
  s.rel_err = rel_sum_ / n;
  s.delta1 = 100.0 * hits_[0] / n;
  s.delta2 = 100.0 * hits_[1] / n;
  s.delta3 = 100.0 * hits_[2] / n;
  s.valid_fraction = n / static_cast<double>(seen_);
  return s;
}

DepthScore depth_score(std::span<const Real> pred, std::span<const Real> truth,
                       double eps) {
  DepthAccumulator acc;
  acc.add(pred, truth, eps);
  return acc.score();
}

double relative_improvement(double proposed, double baseline, Direction dir) {
  if (baseline == 0.0)
    throw std::invalid_argument("relative_improvement: zero baseline");
  const double diff = dir == Direction::HigherBetter ? proposed - baseline
                                                     : baseline - proposed;
  return 100.0 * diff / baseline;
}

std::vector<std::uint8_t> argmax_labels(const Tensor& logits) {
  const Shape& s = logits.shape();
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(s.n) * hw);
  for (int n = 0; n < s.n; ++n) {
    const Real* p = logits.sample(n);
    for (std::size_t i = 0; i < hw; ++i) {
      int best = 0;
      for (int c = 1; c < s.c; ++c)
        if (p[c * hw + i] > p[best * hw + i]) best = c;
      out[n * hw + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

}  // namespace covert
