#pragma once

// Willie's detectors: fixed-statistic heuristics and a trainable
// Conv1d + MLP binary classifier over received feature maps.

#include <array>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "covert/channel.hpp"
#include "covert/layers.hpp"

namespace covert {

/// How a (C, H, W) feature map becomes a one-dimensional sequence.
enum class FeatureLayout {
  PooledChannels,  // sequence over channels; per-channel spatial statistics
  Flattened,       // one value per element, sequence length C*H*W
};
FeatureLayout parse_feature_layout(const std::string& s);
std::string to_string(FeatureLayout l);

struct AttackerConfig {
  std::array<int, 2> conv_channels{16, 16};
  int kernel_size = 3;
  int mlp_hidden = 64;
  int train_steps = 3000;
  int batch_size = 64;
  double holdout_fraction = 0.25;
  /// Share of the non-holdout images used for early stopping.
  double validation_fraction = 0.15;
  double learning_rate = 1e-3;
  int eval_every = 25;
  int patience = 10;
  FeatureLayout layout = FeatureLayout::PooledChannels;

  void validate() const;
};

/// Labelled received features: label 0 = Explicit (public only), 1 = Stego.
struct LabeledFeatureSet {
  Tensor features;                 // (2N, C, H, W)
  std::vector<int> labels;
  std::vector<int> image_ids;      // samples of one image share an id
  Tensor clean_explicit;           // (N, C, H, W) pre-channel, paired by row
  Tensor clean_stego;

  std::size_t size() const { return labels.size(); }
};

/// Clean (pre-channel) Explicit and Stego features for a batch of images.
using PathFeatureFn = std::function<std::pair<Tensor, Tensor>(const Tensor& images)>;

/// Every image yields one Explicit (label 0) and one Stego (label 1)
/// sample, each passed through an independent channel draw.
LabeledFeatureSet build_attack_dataset(const PathFeatureFn& features,
                                       const Tensor& images,
                                       const ChannelConfig& channel,
                                       std::uint64_t rng_seed,
                                       int batch_size = 32);

/// Sequence view (N, C_seq, 1, L) of a batch of feature maps.
Tensor to_sequence(const Tensor& features, FeatureLayout layout);

class Attacker {
 public:
  struct Trace {
    Tensor x, h1, h2, flat, a3, logits;
  };

  Attacker() = default;
  Attacker(const AttackerConfig& cfg, int seq_channels, int seq_length,
           std::uint64_t seed);

  /// Per-position standardisation fitted on the given sequences.
  void fit_standardizer(const Tensor& sequences);
  Tensor standardize(const Tensor& sequences) const;

  /// Logits (N, 1, 1, 1) for standardised sequences.
  Tensor forward(const Tensor& x, Trace* trace = nullptr) const;
  void backward(const Trace& trace, const Tensor& dlogits);

  ParamRefs params();
  /// Hard decisions for raw (unstandardised) sequences.
  std::vector<int> predict(const Tensor& sequences) const;

 private:
  Conv2d conv1_, conv2_;
  Linear fc1_, fc2_;
  std::vector<Real> mean_, inv_std_;
  int seq_length_ = 0;
  int flat_ = 0;
};

struct AttackerSplit {
  std::vector<std::size_t> train, validation, holdout;
};

struct TrainedAttacker {
  Attacker net;
  AttackerSplit split;
  int steps_run = 0;
  double best_validation_loss = 0.0;
};

/// Mean binary cross-entropy with logits, and its gradient.
double bce_with_logits(const Tensor& logits, const std::vector<int>& labels,
                       Tensor* grad);

/// Image-disjoint train / validation / holdout index sets.
AttackerSplit split_by_image(const LabeledFeatureSet& data,
                             const AttackerConfig& cfg, std::uint64_t seed);

/// Throws std::invalid_argument on unbalanced or empty data.
TrainedAttacker train_attacker(const LabeledFeatureSet& data,
                               const AttackerConfig& cfg, std::uint64_t rng_seed);

struct DetectionReport {
  double accuracy = 0.0;
  std::array<std::array<std::int64_t, 2>, 2> confusion{};  // [truth][pred]
  double heuristic_cosine = 0.0;
  double mi_proxy = 0.0;
  std::int64_t num_public = 0;
  std::int64_t num_stego = 0;
  std::int64_t train_samples = 0;
};

struct HeuristicScores {
  double cosine = 0.0;
  double mi_proxy = 0.0;
};

/// Mean paired cosine and 1 - InfoNCE(exp, ste, tau).
HeuristicScores heuristic_scores(const Tensor& exp_features,
                                 const Tensor& ste_features, double tau);

/// Accuracy and confusion of a trained attacker on the given indices.
DetectionReport evaluate_attacker(const TrainedAttacker& attacker,
                                  const LabeledFeatureSet& data,
                                  const std::vector<std::size_t>& indices,
                                  const AttackerConfig& cfg);

/// Trains an attacker and scores it on its image-disjoint holdout, adding
/// heuristic scores computed on the holdout images' clean features.
DetectionReport run_detection(const LabeledFeatureSet& data,
                              const AttackerConfig& cfg, std::uint64_t rng_seed,
                              double tau, TrainedAttacker* out = nullptr);

}  // namespace covert
