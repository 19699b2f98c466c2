#pragma once

// Multi-objective training loss:
//   L_total = L_p^Exp + L_p^Ste + lambda_c * L_c^Ste + L_sparsity
//             + lambda_cts * L_cts

#include <vector>

#include "covert/encoder.hpp"

namespace covert {

struct LossWeights {
  double lambda_c = 1.0;
  double lambda_cts = 1.0;
  double beta = 0.01;
  double gamma = 0.01;
  double cts_temperature = 0.1;
  /// Treat the Explicit anchors as constants inside the contrastive term.
  bool cts_stop_gradient = false;

  void validate() const;
};

struct LossBreakdown {
  double l_p_exp = 0.0;
  double l_p_ste = 0.0;
  double l_c_ste = 0.0;
  double l_sparsity = 0.0;
  double l_cts = 0.0;
  double l_total = 0.0;
};

LossBreakdown total_loss(double l_p_exp, double l_p_ste, double l_c_ste,
                         double l_sparsity, double l_cts,
                         const LossWeights& weights);

struct SparsityResult {
  double value = 0.0;
  std::vector<double> d_gates_exp;  // dL/du_l^Exp
  std::vector<double> d_gates_ste;  // dL/du_l^Ste
};

/// sum_l [ beta (|u_l^Ste| + |u_l^Exp|)
///         + gamma (L - l)/L KL(q_l^Ste || q_l^Exp) ],  l = 1..L.
/// When `policy_grads` is set, the KL gradient is added to the policy's
/// logit gradients.
SparsityResult sparsity_loss(GatePolicy& policy, const GateVector& gates_exp,
                             const GateVector& gates_ste, double beta,
                             double gamma, bool policy_grads = false);
double sparsity_loss_value(const GatePolicy& policy, const GateVector& gates_exp,
                           const GateVector& gates_ste, double beta,
                           double gamma);

/// KL(p || q) over a binary action distribution.
double binary_kl(const std::array<double, 2>& p, const std::array<double, 2>& q);

struct FeatureLoss {
  double value = 0.0;
  Tensor d_anchors;     // same shape as anchors
  Tensor d_candidates;  // same shape as candidates
};

/// InfoNCE over cosine similarity of flattened per-sample features:
///   -(1/N) sum_i log softmax_j(s(a_i, c_j)/tau)[i].
/// Sample i of `anchors` (Explicit) pairs with sample i of `candidates`
/// (Stego); all other candidates in the batch act as negatives.
FeatureLoss contrastive_loss(const Tensor& anchors, const Tensor& candidates,
                             double tau, bool stop_anchor_grad = false);
double contrastive_loss(const std::vector<FeatureMap>& anchors,
                        const std::vector<FeatureMap>& candidates, double tau);

/// Cosine-maximisation surrogate: 1 - mean_i s(a_i, c_i).
FeatureLoss cosine_alignment_loss(const Tensor& anchors,
                                  const Tensor& candidates,
                                  bool stop_anchor_grad = false);

/// Cosine similarity of two flattened vectors; throws on zero norm.
double cosine_similarity(std::span<const Real> a, std::span<const Real> b);
double mean_paired_cosine(const Tensor& a, const Tensor& b);

}  // namespace covert
