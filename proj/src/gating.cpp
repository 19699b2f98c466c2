#include "covert/gating.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "covert/tensor.hpp"

namespace covert {

std::string to_string(PathId p) {
  return p == PathId::Explicit ? "explicit" : "stego";
}

GatePolicy::GatePolicy(int num_blocks, double gate_temperature,
                       std::vector<bool> learnable)
    : num_blocks_(num_blocks),
      logits_(static_cast<std::size_t>(kNumPaths) * num_blocks * 2, 0.0),
      grads_(logits_.size(), 0.0),
      learnable_(std::move(learnable)) {
  if (num_blocks <= 0) throw ConfigError("GatePolicy: num_blocks must be > 0");
  if (learnable_.empty()) learnable_.assign(num_blocks, true);
  if (static_cast<int>(learnable_.size()) != num_blocks)
    throw ConfigError("GatePolicy: learnable mask length mismatch");
  set_gate_temperature(gate_temperature);
}

void GatePolicy::set_gate_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t))
    throw ConfigError("GatePolicy: gate temperature must be positive");
  gate_temperature_ = t;
}

void GatePolicy::set_logit(PathId path, int block, int action, double v) {
  if (!std::isfinite(v)) throw ConfigError("GatePolicy: non-finite logit");
  logits_[index(path, block, action)] = v;
}

void GatePolicy::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void GatePolicy::mask_pinned_grads() {
  for (PathId p : kPaths)
    for (int l = 0; l < num_blocks_; ++l)
      if (!learnable_[l]) grad(p, l, 0) = grad(p, l, 1) = 0.0;
}

void GateVector::validate() const {
  for (double v : values) {
    if (mode == GateMode::Soft && !(v > 0.0 && v < 1.0))
      throw ConfigError("GateVector: soft gate outside (0,1)");
    if (mode == GateMode::Hard && v != 0.0 && v != 1.0)
      throw ConfigError("GateVector: hard gate not in {0,1}");
  }
}

double gumbel_from_uniform(double eps) {
  eps = std::clamp(eps, kGumbelEpsMin, kGumbelEpsMax);
  return -std::log(-std::log(eps));
}

std::vector<double> sample_gumbel_noise(std::span<const std::size_t> shape,
                                        std::uint64_t rng_seed) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ConfigError("sample_gumbel_noise: zero extent");
    n *= d;
  }
  Rng rng = make_rng(rng_seed, 0x6a);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> g(n);
  for (auto& v : g) v = gumbel_from_uniform(uni(rng));
  return g;
}

namespace {

// Execute probability of a two-way softmax over (a0, a1) / t, computed as a
// logistic of the difference so that the larger exponent is factored out.
double two_way_execute(double a0, double a1, double t) {
  const double d = (a1 - a0) / t;
  if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

}  // namespace

double soft_gate(const GatePolicy& policy, int block, PathId path,
                 std::span<const double, 2> noise) {
  return two_way_execute(policy.logit(path, block, 0) + noise[0],
                         policy.logit(path, block, 1) + noise[1],
                         policy.gate_temperature());
}

std::array<double, 2> soft_gate_grad(const GatePolicy& policy, int block,
                                     PathId path,
                                     std::span<const double, 2> noise) {
  const double u = soft_gate(policy, block, path, noise);
  const double d = u * (1.0 - u) / policy.gate_temperature();
  return {-d, d};
}

int hard_gate(const GatePolicy& policy, int block, PathId path) {
  return policy.logit(path, block, 1) >= policy.logit(path, block, 0) ? 1 : 0;
}

std::array<double, 2> activation_distribution(const GatePolicy& policy,
                                              int block, PathId path) {
  const double p1 = two_way_execute(policy.logit(path, block, 0),
                                    policy.logit(path, block, 1), 1.0);
  const double p0 = two_way_execute(policy.logit(path, block, 1),
                                    policy.logit(path, block, 0), 1.0);
  return {p0, p1};
}

SoftGateSample sample_soft_gates(const GatePolicy& policy, PathId path,
                                 std::uint64_t rng_seed) {
  const int n = policy.num_blocks();
  const std::array<std::size_t, 2> shape = {static_cast<std::size_t>(n), 2};
  const auto g = sample_gumbel_noise(shape, rng_seed);
  SoftGateSample s;
  s.gates.mode = GateMode::Soft;
  s.gates.values.resize(n);
  s.noise.resize(n);
  for (int l = 0; l < n; ++l) {
    s.noise[l] = {g[2 * l], g[2 * l + 1]};
    s.gates.values[l] =
        policy.learnable(l)
            ? soft_gate(policy, l, path, std::span<const double, 2>(s.noise[l]))
            : 1.0;
  }
  return s;
}

GateVector hard_gates(const GatePolicy& policy, PathId path) {
  GateVector v;
  v.mode = GateMode::Hard;
  for (int l = 0; l < policy.num_blocks(); ++l)
    v.values.push_back(policy.learnable(l) ? hard_gate(policy, l, path) : 1.0);
  return v;
}

GateVector sample_architecture(const GatePolicy& policy, PathId path,
                               Rng& rng) {
  GateVector v;
  v.mode = GateMode::Hard;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int l = 0; l < policy.num_blocks(); ++l) {
    const double p = activation_distribution(policy, l, path)[1];
    const double r = uni(rng);
    v.values.push_back(policy.learnable(l) ? (r < p ? 1.0 : 0.0) : 1.0);
  }
  return v;
}

std::pair<GateVector, GateVector> sample_architecture_pair(const GatePolicy& policy,
                                                           Rng& rng) {
  std::pair<GateVector, GateVector> out;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int l = 0; l < policy.num_blocks(); ++l) {
    const double r = uni(rng);
    for (auto [path, v] : {std::pair{PathId::Explicit, &out.first},
                           std::pair{PathId::Stego, &out.second}}) {
      const double p = activation_distribution(policy, l, path)[1];
      v->values.push_back(policy.learnable(l) ? (r < p ? 1.0 : 0.0) : 1.0);
    }
  }
  return out;
}

void accumulate_soft_gate_grad(GatePolicy& policy, PathId path,
                               const SoftGateSample& sample,
                               std::span<const double> dloss_dgate) {
  for (int l = 0; l < policy.num_blocks(); ++l) {
    if (!policy.learnable(l)) continue;
    const auto g = soft_gate_grad(policy, l, path,
                                  std::span<const double, 2>(sample.noise[l]));
    policy.grad(path, l, 0) += dloss_dgate[l] * g[0];
    policy.grad(path, l, 1) += dloss_dgate[l] * g[1];
  }
}

double TemperatureSchedule::at(int step) const {
  if (steps <= 1) return end;
  const double frac =
      std::clamp(static_cast<double>(step) / (steps - 1), 0.0, 1.0);
  return start * std::pow(end / start, frac);
}

}  // namespace covert
