#pragma once

// Select-or-skip gating for the two encoder paths.
//
// Each block l of path k carries two logits, alpha[k][l][0] (skip) and
// alpha[k][l][1] (execute). Training uses Gumbel-Softmax soft gates
//   u = exp((a1 + g1)/t) / (exp((a0 + g0)/t) + exp((a1 + g1)/t)),
// inference uses the noise-free hard gate u = [a1 >= a0].
// Block indices are 0-based here (block l of the formulas is index l-1).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "covert/rng.hpp"
#include "covert/tensor.hpp"

namespace covert {

enum class PathId : int { Explicit = 0, Stego = 1 };
inline constexpr int kNumPaths = 2;
inline constexpr std::array<PathId, 2> kPaths = {PathId::Explicit,
                                                 PathId::Stego};
std::string to_string(PathId p);

enum class GateMode { Soft, Hard };

/// Open interval clamp applied to uniform draws before the double log.
inline constexpr double kGumbelEpsMin = 1e-10;
inline constexpr double kGumbelEpsMax = 1.0 - 1e-10;

class GatePolicy {
 public:
  GatePolicy() = default;
  /// `learnable[l] == false` pins block l to execute (shape-changing blocks).
  GatePolicy(int num_blocks, double gate_temperature,
             std::vector<bool> learnable = {});

  int num_blocks() const { return num_blocks_; }
  double gate_temperature() const { return gate_temperature_; }
  void set_gate_temperature(double t);
  bool learnable(int block) const { return learnable_.at(block); }

  double logit(PathId path, int block, int action) const {
    return logits_[index(path, block, action)];
  }
  void set_logit(PathId path, int block, int action, double v);
  double& grad(PathId path, int block, int action) {
    return grads_[index(path, block, action)];
  }
  double grad(PathId path, int block, int action) const {
    return grads_[index(path, block, action)];
  }

  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  void zero_grad();
  /// Zeroes gradients of pinned blocks so optimisers leave them untouched.
  void mask_pinned_grads();

 private:
  std::size_t index(PathId path, int block, int action) const {
    return (static_cast<std::size_t>(path) * num_blocks_ + block) * 2 + action;
  }

  int num_blocks_ = 0;
  double gate_temperature_ = 1.0;
  std::vector<double> logits_;
  std::vector<double> grads_;
  std::vector<bool> learnable_;
};

struct GateVector {
  std::vector<double> values;
  GateMode mode = GateMode::Hard;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  /// Throws ConfigError when the values violate the mode's range.
  void validate() const;
  static GateVector ones(int n) {
    return {std::vector<double>(n, 1.0), GateMode::Hard};
  }
};

/// g = -log(-log(eps)) with eps clamped to [kGumbelEpsMin, kGumbelEpsMax].
double gumbel_from_uniform(double eps);

/// I.i.d. standard Gumbel draws; the flat length is the product of `shape`.
std::vector<double> sample_gumbel_noise(std::span<const std::size_t> shape,
                                        std::uint64_t rng_seed);

double soft_gate(const GatePolicy& policy, int block, PathId path,
                 std::span<const double, 2> noise);

/// d(soft_gate)/d(alpha_skip), d(soft_gate)/d(alpha_execute).
std::array<double, 2> soft_gate_grad(const GatePolicy& policy, int block,
                                     PathId path,
                                     std::span<const double, 2> noise);

int hard_gate(const GatePolicy& policy, int block, PathId path);

/// softmax(alpha[path][block]) at unit temperature: (skip, execute).
std::array<double, 2> activation_distribution(const GatePolicy& policy,
                                              int block, PathId path);

struct SoftGateSample {
  GateVector gates;
  std::vector<std::array<double, 2>> noise;  // one pair per block
};

/// Soft gates for every block of a path; pinned blocks are exactly 1.
SoftGateSample sample_soft_gates(const GatePolicy& policy, PathId path,
                                 std::uint64_t rng_seed);

GateVector hard_gates(const GatePolicy& policy, PathId path);

/// Draws a hard architecture u_l ~ Bernoulli(q_l[execute]).
GateVector sample_architecture(const GatePolicy& policy, PathId path, Rng& rng);

/// Both paths' architectures from one uniform draw per block, so each path
/// keeps its Bernoulli marginals and the paths differ on block l with
/// probability |q_l^Exp - q_l^Ste|.
std::pair<GateVector, GateVector> sample_architecture_pair(const GatePolicy& policy,
                                                           Rng& rng);

/// Chain rule from dL/du (one entry per block) into the policy gradients.
void accumulate_soft_gate_grad(GatePolicy& policy, PathId path,
                               const SoftGateSample& sample,
                               std::span<const double> dloss_dgate);

/// Exponential annealing of the gate temperature over `steps` updates.
struct TemperatureSchedule {
  double start = 5.0;
  double end = 0.5;
  int steps = 1;

  double at(int step) const;
};

}  // namespace covert
