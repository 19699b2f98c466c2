#include "covert/objectives.hpp"

#include <cmath>

namespace covert {

void LossWeights::validate() const {
  if (lambda_c < 0 || lambda_cts < 0 || beta < 0 || gamma < 0)
    throw ConfigError("LossWeights: weights must be nonnegative");
  if (!(cts_temperature > 0))
    throw ConfigError("LossWeights: contrastive temperature must be positive");
}

LossBreakdown total_loss(double l_p_exp, double l_p_ste, double l_c_ste,
                         double l_sparsity, double l_cts,
                         const LossWeights& w) {
  LossBreakdown b;
  b.l_p_exp = l_p_exp;
  b.l_p_ste = l_p_ste;
  b.l_c_ste = l_c_ste;
  b.l_sparsity = l_sparsity;
  b.l_cts = l_cts;
  b.l_total = l_p_exp + l_p_ste + w.lambda_c * l_c_ste + l_sparsity +
              w.lambda_cts * l_cts;
  return b;
}

double binary_kl(const std::array<double, 2>& p, const std::array<double, 2>& q) {
  double kl = 0.0;
  for (int j = 0; j < 2; ++j)
    if (p[j] > 0) kl += p[j] * (std::log(p[j]) - std::log(q[j]));
  return kl;
}

namespace {

void check_gate_lengths(const GatePolicy& policy, const GateVector& a,
                        const GateVector& b) {
  if (static_cast<int>(a.size()) != policy.num_blocks() ||
      static_cast<int>(b.size()) != policy.num_blocks())
    throw ConfigError("sparsity_loss: gate vectors must have one entry per block");
}

}  // namespace

double sparsity_loss_value(const GatePolicy& policy, const GateVector& gates_exp,
                           const GateVector& gates_ste, double beta,
                           double gamma) {
  check_gate_lengths(policy, gates_exp, gates_ste);
  const int L = policy.num_blocks();
  double total = 0.0;
  for (int i = 0; i < L; ++i) {
    const int l = i + 1;
    const double weight = static_cast<double>(L - l) / L;
    total += beta * (std::abs(gates_ste[i]) + std::abs(gates_exp[i]));
    if (gamma != 0.0 && weight != 0.0)
      total += gamma * weight *
               binary_kl(activation_distribution(policy, i, PathId::Stego),
                         activation_distribution(policy, i, PathId::Explicit));
  }
  return total;
}

SparsityResult sparsity_loss(GatePolicy& policy, const GateVector& gates_exp,
                             const GateVector& gates_ste, double beta,
                             double gamma, bool policy_grads) {
  SparsityResult r;
  r.value = sparsity_loss_value(policy, gates_exp, gates_ste, beta, gamma);
  const int L = policy.num_blocks();
  r.d_gates_exp.resize(L);
  r.d_gates_ste.resize(L);
  for (int i = 0; i < L; ++i) {
    auto sgn = [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); };
    r.d_gates_exp[i] = beta * sgn(gates_exp[i]);
    r.d_gates_ste[i] = beta * sgn(gates_ste[i]);
    if (!policy_grads || gamma == 0.0) continue;
    const double weight = static_cast<double>(L - (i + 1)) / L;
    if (weight == 0.0) continue;
    const auto p = activation_distribution(policy, i, PathId::Stego);
    const auto q = activation_distribution(policy, i, PathId::Explicit);
    const double kl = binary_kl(p, q);
    for (int j = 0; j < 2; ++j) {
      // d KL / d alpha_Ste[j] = p_j (log p_j - log q_j - KL)
      policy.grad(PathId::Stego, i, j) +=
          gamma * weight * p[j] * (std::log(p[j]) - std::log(q[j]) - kl);
      // d KL / d alpha_Exp[j] = q_j - p_j
      policy.grad(PathId::Explicit, i, j) += gamma * weight * (q[j] - p[j]);
    }
  }
  return r;
}

double cosine_similarity(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size())
    throw ConfigError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("degenerate feature for cosine similarity");
  return dot / std::sqrt(na * nb);
}

namespace {

struct Normalized {
  std::vector<std::vector<double>> unit;  // per sample unit vectors
  std::vector<double> norm;
};

Normalized normalize_rows(const Tensor& t) {
  const int n = t.shape().n;
  const std::size_t d = t.shape().sample_size();
  Normalized out;
  out.unit.resize(n);
  out.norm.resize(n);
  for (int i = 0; i < n; ++i) {
    const Real* p = t.sample(i);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += static_cast<double>(p[k]) * p[k];
    if (sq == 0.0)
      throw std::invalid_argument("degenerate feature for cosine similarity");
    out.norm[i] = std::sqrt(sq);
    out.unit[i].resize(d);
    for (std::size_t k = 0; k < d; ++k) out.unit[i][k] = p[k] / out.norm[i];
  }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Adds coef * d s(a_i, c_j) / d a_i to grad_a and the c_j part to grad_c,
// where s is the cosine of the raw vectors.
void add_cosine_grad(const Normalized& A, int i, const Normalized& C, int j,
                     double sim, double coef, Real* grad_a, Real* grad_c) {
  const auto& ua = A.unit[i];
  const auto& uc = C.unit[j];
  const double ia = 1.0 / A.norm[i], ic = 1.0 / C.norm[j];
  for (std::size_t k = 0; k < ua.size(); ++k) {
    if (grad_a) grad_a[k] += static_cast<Real>(coef * ia * (uc[k] - sim * ua[k]));
    if (grad_c) grad_c[k] += static_cast<Real>(coef * ic * (ua[k] - sim * uc[k]));
  }
}

}  // namespace

FeatureLoss contrastive_loss(const Tensor& anchors, const Tensor& candidates,
                             double tau, bool stop_anchor_grad) {
  require_same_shape(anchors, candidates, "contrastive_loss");
  if (!(tau > 0)) throw ConfigError("contrastive_loss: tau must be positive");
  const int n = anchors.shape().n;
  if (n == 0) throw std::invalid_argument("contrastive_loss: empty batch");
  const Normalized A = normalize_rows(anchors);
  const Normalized C = normalize_rows(candidates);

  std::vector<double> sim(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) sim[i * n + j] = dot(A.unit[i], C.unit[j]);

  FeatureLoss out;
  out.d_anchors = Tensor(anchors.shape());
  out.d_candidates = Tensor(candidates.shape());
  double total = 0.0;
  std::vector<double> soft(n);
  for (int i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (int j = 0; j < n; ++j) mx = std::max(mx, sim[i * n + j] / tau);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      soft[j] = std::exp(sim[i * n + j] / tau - mx);
      z += soft[j];
    }
    total += -(sim[i * n + i] / tau - mx - std::log(z));
    for (int j = 0; j < n; ++j) {
      // dL/ds_ij = (softmax_ij - [i == j]) / (N tau)
      const double coef = (soft[j] / z - (i == j ? 1.0 : 0.0)) / (n * tau);
      add_cosine_grad(A, i, C, j, sim[i * n + j], coef,
                      stop_anchor_grad ? nullptr : out.d_anchors.sample(i),
                      out.d_candidates.sample(j));
    }
  }
  out.value = total / n;
  return out;
}

double contrastive_loss(const std::vector<FeatureMap>& anchors,
                        const std::vector<FeatureMap>& candidates, double tau) {
  if (anchors.size() != candidates.size())
    throw std::invalid_argument("contrastive_loss: list lengths differ");
  if (anchors.empty()) throw std::invalid_argument("contrastive_loss: N = 0");
  std::vector<Tensor> a, c;
  for (const auto& f : anchors) a.push_back(f.data);
  for (const auto& f : candidates) c.push_back(f.data);
  return contrastive_loss(Tensor::stack(a), Tensor::stack(c), tau).value;
}

FeatureLoss cosine_alignment_loss(const Tensor& anchors,
                                  const Tensor& candidates,
                                  bool stop_anchor_grad) {
  require_same_shape(anchors, candidates, "cosine_alignment_loss");
  const int n = anchors.shape().n;
  if (n == 0) throw std::invalid_argument("cosine_alignment_loss: empty batch");
  const Normalized A = normalize_rows(anchors);
  const Normalized C = normalize_rows(candidates);
  FeatureLoss out;
  out.d_anchors = Tensor(anchors.shape());
  out.d_candidates = Tensor(candidates.shape());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = dot(A.unit[i], C.unit[i]);
    total += s;
    add_cosine_grad(A, i, C, i, s, -1.0 / n,
                    stop_anchor_grad ? nullptr : out.d_anchors.sample(i),
                    out.d_candidates.sample(i));
  }
  out.value = 1.0 - total / n;
  return out;
}

double mean_paired_cosine(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mean_paired_cosine");
  const int n = a.shape().n;
  const std::size_t d = a.shape().sample_size();
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    total += cosine_similarity(std::span<const Real>(a.sample(i), d),
                               std::span<const Real>(b.sample(i), d));
  return n ? total / n : 0.0;
}

}  // namespace covert
