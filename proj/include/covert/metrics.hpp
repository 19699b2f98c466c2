#pragma once

// Task-quality metrics and relative-improvement bookkeeping.

#include <cstdint>
#include <span>
#include <vector>

#include "covert/tensor.hpp"

namespace covert {

struct SegScore {
  double miou = 0.0;
  double pixel_acc = 0.0;
};

struct DepthScore {
  double abs_err = 0.0;
  double rel_err = 0.0;
  double delta1 = 0.0;  // percent
  double delta2 = 0.0;
  double delta3 = 0.0;
  double valid_fraction = 0.0;
};

/// Global confusion counts; rows are truth, columns prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 0);

  void add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth,
           std::uint8_t ignore_index = 255);
  /// Associative, commutative merge of partial counts.
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return num_classes_; }
  std::uint64_t count(int truth, int pred) const {
    return counts_[static_cast<std::size_t>(truth) * num_classes_ + pred];
  }
  std::uint64_t total() const;
  /// Throws std::invalid_argument when no pixel has been counted.
  SegScore score() const;

 private:
  int num_classes_;
  std::vector<std::uint64_t> counts_;
};

SegScore segmentation_score(std::span<const std::uint8_t> pred,
                            std::span<const std::uint8_t> truth,
                            int num_classes, std::uint8_t ignore_index = 255);

/// Pixels whose truth is not greater than eps (or not finite) are masked.
DepthScore depth_score(std::span<const Real> pred, std::span<const Real> truth,
                       double eps = 1e-6);

/// Running depth accumulator so batches can be combined.
class DepthAccumulator {
 public:
  void add(std::span<const Real> pred, std::span<const Real> truth,
           double eps = 1e-6);
  void merge(const DepthAccumulator& other);
  DepthScore score() const;

 private:
  double abs_sum_ = 0.0, rel_sum_ = 0.0;
  std::uint64_t hits_[3] = {0, 0, 0};
  std::uint64_t valid_ = 0, seen_ = 0;
};

enum class Direction { HigherBetter, LowerBetter };

/// Percent change of `proposed` over `baseline` in the improving direction.
double relative_improvement(double proposed, double baseline, Direction dir);

/// Per-pixel argmax over the class axis of (N, C, H, W) logits.
std::vector<std::uint8_t> argmax_labels(const Tensor& logits);

}  // namespace covert
