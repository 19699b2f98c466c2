#include "covert/harness.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <tuple>

#include "covert/optim.hpp"

namespace covert {

namespace fs = std::filesystem;

CovertSystem::CovertSystem(const ExperimentConfig& cfg)
    : encoder(cfg.encoder_config(), mix_seed(cfg.seed, 1), "enc"),
      public_dec(cfg.decoder_config(DecoderTask::Public), DecoderTask::Public,
                 mix_seed(cfg.seed, 3), "dec_public"),
      covert_dec(cfg.decoder_config(DecoderTask::Covert), DecoderTask::Covert,
                 mix_seed(cfg.seed, 4), "dec_covert"),
      kind_(cfg.model),
      enc_cfg_(cfg.encoder_config()) {
  const int L = enc_cfg_.num_blocks();
  policy = GatePolicy(L, cfg.train.gate_tau_start, enc_cfg_.learnable_mask());
  gates_exp = GateVector::ones(L);
  gates_ste = GateVector::ones(L);
  if (!uses_gated_backbone(kind_))
    aux.emplace(enc_cfg_, mix_seed(cfg.seed, 2), "aux");
  if (kind_ == ModelKind::RandomPath) {
    Rng rng = make_rng(cfg.seed, 0x7a4d);
    gates_exp = sample_architecture(policy, PathId::Explicit, rng);
    gates_ste = sample_architecture(policy, PathId::Stego, rng);
  }
}

std::pair<Tensor, Tensor> CovertSystem::features(const Tensor& images,
                                                 bool normalize) {
  Tensor ze, zs;
  if (uses_gated_backbone(kind_)) {
    ze = encoder.forward_path(images, gates_exp, PathId::Explicit, false).data;
    zs = encoder.forward_path(images, gates_ste, PathId::Stego, false).data;
  } else {
    const GateVector dense = GateVector::ones(enc_cfg_.num_blocks());
    Tensor p = encoder.forward_path(images, dense, PathId::Explicit, false).data;
    Tensor c = aux->forward_path(images, dense, PathId::Stego, false).data;
    switch (kind_) {
      case ModelKind::StackingBaseline:
        ze = p;
        zs = p;
        zs += c;
        break;
      case ModelKind::NoiseBaseline:
        ze = p;
        c *= static_cast<Real>(noise_scale);
        zs = p;
        zs += c;
        break;
      default:  // standard SemCom: separate streams per task
        ze = std::move(p);
        zs = std::move(c);
        break;
    }
  }
  if (normalize) {
    ze = power_normalize(ze).data;
    zs = power_normalize(zs).data;
  }
  return {std::move(ze), std::move(zs)};
}

ParamRefs CovertSystem::weight_params() {
  ParamRefs out = encoder.params();
  if (aux) {
    ParamRefs a = aux->params();
    out.insert(out.end(), a.begin(), a.end());
  }
  for (Decoder* d : {&public_dec, &covert_dec}) {
    ParamRefs p = d->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::uint64_t CovertSystem::parameter_count() {
  std::uint64_t n = count_elements(weight_params());
  if (kind_ == ModelKind::NoiseBaseline) n += 1;
  return n;
}

namespace {

template <typename F>
void for_each_batchnorm(Encoder& enc, F&& f) {
  for (auto& b : enc.blocks()) {
    f(b.bn1);
    f(b.bn2);
  }
}

std::string stat_name(const BatchNorm2d& bn, const char* what) {
  std::string n = bn.gamma.name;
  return n.substr(0, n.size() - std::string(".gamma").size()) + "." + what;
}

}  // namespace

Checkpoint CovertSystem::checkpoint() {
  Checkpoint ck;
  ck.add_params(weight_params());
  auto add_stats = [&](Encoder& e) {
    for_each_batchnorm(e, [&](BatchNorm2d& bn) {
      ck.add(stat_name(bn, "running_mean"), bn.running_mean);
      ck.add(stat_name(bn, "running_var"), bn.running_var);
    });
  };
  add_stats(encoder);
  if (aux) add_stats(*aux);
  ck.add("policy.logits", policy.logits());
  ck.add("gates.explicit", gates_exp.values);
  ck.add("gates.stego", gates_ste.values);
  const double a = noise_scale;
  ck.add("noise_scale", std::span<const double>(&a, 1));
  return ck;
}

void CovertSystem::restore(const Checkpoint& ck) {
  ck.load_params(weight_params());
  auto load_stats = [&](Encoder& e) {
    for_each_batchnorm(e, [&](BatchNorm2d& bn) {
      ck.load_into(stat_name(bn, "running_mean"), bn.running_mean);
      ck.load_into(stat_name(bn, "running_var"), bn.running_var);
    });
  };
  load_stats(encoder);
  if (aux) load_stats(*aux);
  const auto& logits = ck.get("policy.logits").data;
  if (logits.size() != policy.logits().size())
    throw ConfigError("checkpoint: policy size mismatch");
  std::copy(logits.begin(), logits.end(), policy.logits().begin());
  gates_exp = {ck.get("gates.explicit").data, GateMode::Hard};
  gates_ste = {ck.get("gates.stego").data, GateMode::Hard};
  noise_scale = ck.get("noise_scale").data.at(0);
}

DatasetSplits make_datasets(const ExperimentConfig& cfg) {
  return dataset_splits(cfg.data.n_train, cfg.data.n_val, cfg.data.n_test,
                        cfg.data.base_seed, cfg.scene_config());
}

namespace {

struct StepResult {
  LossBreakdown loss;
  double d_noise_scale = 0.0;
};

void check_finite(double v, const char* what, int phase, int step) {
  if (!std::isfinite(v))
    throw NumericalError(std::string("non-finite ") + what + " in phase " +
                             std::to_string(phase) + " at step " + std::to_string(step),
                         -1);
}

// One forward pass of both transmissions and, when `grads` is set, the full
// backward pass. Parameter and policy gradients are overwritten.
StepResult forward_backward(CovertSystem& sys, const ExperimentConfig& cfg,
                            const Batch& batch, std::uint64_t seed, bool soft,
                            bool train, bool grads) {
  const ModelKind kind = sys.kind();
  const bool gated = uses_gated_backbone(kind);
  const int L = sys.encoder_config().num_blocks();
  const LossWeights& w = cfg.loss;

  SoftGateSample se, ss;
  GateVector ge = sys.gates_exp, gs = sys.gates_ste;
  if (gated && soft) {
    se = sample_soft_gates(sys.policy, PathId::Explicit, mix_seed(seed, 11));
    ss = sample_soft_gates(sys.policy, PathId::Stego, mix_seed(seed, 12));
    ge = se.gates;
    gs = ss.gates;
  }

  Encoder::Trace te, ts;
  Tensor z_exp, z_ste, p, c;
  if (gated) {
    z_exp = sys.encoder.forward_path(batch.images, ge, PathId::Explicit, train, &te).data;
    z_ste = sys.encoder.forward_path(batch.images, gs, PathId::Stego, train, &ts).data;
  } else {
    const GateVector dense = GateVector::ones(L);
    p = sys.encoder.forward_path(batch.images, dense, PathId::Explicit, train, &te).data;
    c = sys.aux->forward_path(batch.images, dense, PathId::Stego, train, &ts).data;
    z_exp = p;
    if (kind == ModelKind::StandardSemCom) {
      z_ste = c;
    } else {
      z_ste = c;
      if (kind == ModelKind::NoiseBaseline) z_ste *= static_cast<Real>(sys.noise_scale);
      z_ste += p;
    }
  }

  const bool norm = cfg.train.power_normalize;
  PowerNormalized ne, ns;
  if (norm) {
    ne = power_normalize(z_exp);
    ns = power_normalize(z_ste);
  }
  const ReceivedFeature rx_e = transmit(norm ? ne.data : z_exp, cfg.channel, mix_seed(seed, 13));
  const ReceivedFeature rx_s = transmit(norm ? ns.data : z_ste, cfg.channel, mix_seed(seed, 14));

  Rng drop = make_rng(seed, 15);
  Decoder::Trace dpe, dps, dcs;
  const bool semcom = kind == ModelKind::StandardSemCom;
  const LossValue lpe = public_loss(sys.public_dec.forward(rx_e.data, train, &drop, &dpe), batch.labels);
  LossValue lps;
  if (!semcom)
    lps = public_loss(sys.public_dec.forward(rx_s.data, train, &drop, &dps), batch.labels);
  const LossValue lc = covert_loss(sys.covert_dec.forward(rx_s.data, train, &drop, &dcs), batch.depth);

  FeatureLoss align;
  bool has_align = false;
  double l_align = 0.0;
  const bool contrastive = kind == ModelKind::Proposed || kind == ModelKind::RandomPath;
  const bool cosine = kind == ModelKind::CosineSimilarityAblation || kind == ModelKind::NoiseBaseline;
  if (contrastive || cosine) {
    align = contrastive
                ? contrastive_loss(z_exp, z_ste, w.cts_temperature, w.cts_stop_gradient)
                : cosine_alignment_loss(z_exp, z_ste, w.cts_stop_gradient);
    l_align = align.value;
    has_align = true;
  }

  SparsityResult sp;
  double l_sparsity = 0.0;
  if (gated) {
    if (soft && grads) sys.policy.zero_grad();
    sp = sparsity_loss(sys.policy, ge, gs, w.beta, w.gamma, soft && grads);
    l_sparsity = sp.value;
  }

  StepResult out;
  out.loss = total_loss(lpe.value, semcom ? 0.0 : lps.value, lc.value, l_sparsity, l_align, w);
  if (!grads) return out;

  zero_grads(sys.weight_params());
  // Receiver side.
  Tensor dz_e = transmit_backward(rx_e, sys.public_dec.backward(dpe, lpe.grad));
  Tensor dcov = lc.grad;
  dcov *= static_cast<Real>(w.lambda_c);
  Tensor drx_s = sys.covert_dec.backward(dcs, dcov);
  if (!semcom) drx_s += sys.public_dec.backward(dps, lps.grad);
  Tensor dz_s = transmit_backward(rx_s, drx_s);
  if (norm) {
    dz_e = power_normalize_backward(ne, dz_e);
    dz_s = power_normalize_backward(ns, dz_s);
  }
  if (has_align && w.lambda_cts != 0.0) {
    align.d_anchors *= static_cast<Real>(w.lambda_cts);
    align.d_candidates *= static_cast<Real>(w.lambda_cts);
    dz_e += align.d_anchors;
    dz_s += align.d_candidates;
  }

  // Transmitter side.
  if (gated) {
    std::vector<double> dge, dgs;
    sys.encoder.backward(ts, dz_s, &dgs);
    sys.encoder.backward(te, dz_e, &dge);
    if (soft) {
      for (int l = 0; l < L; ++l) {
        dge[l] += sp.d_gates_exp[l];
        dgs[l] += sp.d_gates_ste[l];
      }
      accumulate_soft_gate_grad(sys.policy, PathId::Explicit, se, dge);
      accumulate_soft_gate_grad(sys.policy, PathId::Stego, ss, dgs);
      sys.policy.mask_pinned_grads();
    }
  } else if (semcom) {
    sys.encoder.backward(te, dz_e);
    sys.aux->backward(ts, dz_s);
  } else {
    Tensor dp = dz_e;
    dp += dz_s;
    Tensor dc = dz_s;
    if (kind == ModelKind::NoiseBaseline) {
      double da = 0.0;
      for (std::size_t i = 0; i < dz_s.size(); ++i) da += static_cast<double>(dz_s[i]) * c[i];
      out.d_noise_scale = da;
      dc *= static_cast<Real>(sys.noise_scale);
    }
    sys.encoder.backward(te, dp);
    sys.aux->backward(ts, dc);
  }
  return out;
}

std::vector<std::size_t> sample_batch(std::size_t n, int batch, Rng& rng) {
  std::vector<std::size_t> idx;
  std::set<std::size_t> seen;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (static_cast<int>(idx.size()) < batch && idx.size() < n) {
    const std::size_t i = pick(rng);
    if (seen.insert(i).second) idx.push_back(i);
  }
  return idx;
}

struct Schedule {
  double lr = 0.0;
  int constant_steps = 0;  // then cosine decay over the remaining steps
  int total_steps = 0;
  double at(int step) const {
    if (step < constant_steps || total_steps <= constant_steps) return lr;
    const double t = static_cast<double>(step - constant_steps) / (total_steps - constant_steps);
    return lr * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
  }
};

void run_steps(CovertSystem& sys, const ExperimentConfig& cfg, const SceneSet& train,
               int steps, int phase, int candidate, bool soft, const Schedule& sched,
               std::uint64_t stream, std::vector<LossPoint>& history,
               const RunOptions& opts) {
  if (steps <= 0) return;
  const TrainConfig& tc = cfg.train;
  Sgd sgd(sys.weight_params(), tc.weight_lr, tc.momentum, tc.weight_decay);
  Adam adam(tc.policy_lr);
  AdamState adam_state;
  const TemperatureSchedule temp{tc.gate_tau_start, tc.gate_tau_end, steps};
  Rng rng = make_rng(cfg.seed, stream);
  double noise_velocity = 0.0;
  for (int s = 0; s < steps; ++s) {
    if (soft) sys.policy.set_gate_temperature(temp.at(s));
    const Batch batch = make_batch(train.scenes, sample_batch(train.size(), tc.batch_size, rng));
    const StepResult r = forward_backward(sys, cfg, batch, mix_seed(mix_seed(cfg.seed, stream), s),
                                          soft, true, true);
    check_finite(r.loss.l_total, "loss", phase, s);
    sgd.set_lr(sched.at(s));
    sgd.step();
    if (soft) {
      adam.tick();
      adam.update(sys.policy.logits(), std::span<const double>(sys.policy.grads()), adam_state);
    }
    if (sys.kind() == ModelKind::NoiseBaseline) {
      noise_velocity = tc.momentum * noise_velocity + r.d_noise_scale;
      sys.noise_scale -= sched.at(s) * noise_velocity;
    }
    if ((s + 1) % tc.log_every == 0 || s + 1 == steps) {
      LossPoint lp{phase, candidate, s + 1, soft ? sys.policy.gate_temperature() : 0.0, r.loss};
      history.push_back(lp);
      if (opts.on_log) opts.on_log(lp);
    }
  }
}

std::vector<double> execute_probabilities(const GatePolicy& policy, PathId path) {
  std::vector<double> q;
  for (int l = 0; l < policy.num_blocks(); ++l)
    q.push_back(policy.learnable(l) ? activation_distribution(policy, l, path)[1] : 1.0);
  return q;
}

RunRecord new_record(const ExperimentConfig& cfg) {
  RunRecord r;
  r.config_text = cfg.to_kv().canonical();
  r.config_hash = cfg.hash();
  r.seed = cfg.seed;
  r.model = to_string(cfg.model);
  return r;
}

void finish_record(RunRecord& rec, CovertSystem& sys, const ExperimentConfig& cfg) {
  rec.q_explicit = execute_probabilities(sys.policy, PathId::Explicit);
  rec.q_stego = execute_probabilities(sys.policy, PathId::Stego);
  rec.gates_explicit = sys.gates_exp.values;
  rec.gates_stego = sys.gates_ste.values;
  const auto pub = cfg.decoder_config(DecoderTask::Public);
  const auto cov = cfg.decoder_config(DecoderTask::Covert);
  rec.cost = uses_gated_backbone(cfg.model)
                 ? system_cost(sys.encoder_config(), sys.gates_exp, sys.gates_ste, pub, cov)
                 : dual_encoder_cost(sys.encoder_config(), pub, cov);
  rec.parameter_count = sys.parameter_count();
}

void persist(RunRecord& rec, CovertSystem& sys, const ExperimentConfig& cfg,
             const DatasetSplits& data, const RunOptions& opts) {
  if (!opts.output_root) return;
  const fs::path dir = *opts.output_root / cfg.run_name();
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "config.cfg");
    out << rec.config_text;
  }
  write_split_membership(dir / "splits.txt", data);
  sys.checkpoint().save(dir / "model.ckpt");
  rec.checkpoints.push_back((dir / "model.ckpt").string());
  write_run_outputs(rec, dir);
}

}  // namespace

LossBreakdown validation_loss(CovertSystem& sys, const ExperimentConfig& cfg,
                              const SceneSet& val) {
  const int bs = cfg.train.batch_size;
  LossBreakdown sum;
  int batches = 0;
  for (std::size_t b = 0; b + bs <= val.size(); b += bs) {
    const Batch batch = make_batch(val.scenes, b, b + bs);
    const StepResult r = forward_backward(sys, cfg, batch, mix_seed(cfg.seed ^ 0x7a11d, b),
                                          false, false, false);
    sum.l_p_exp += r.loss.l_p_exp;
    sum.l_p_ste += r.loss.l_p_ste;
    sum.l_c_ste += r.loss.l_c_ste;
    sum.l_sparsity += r.loss.l_sparsity;
    sum.l_cts += r.loss.l_cts;
    sum.l_total += r.loss.l_total;
    ++batches;
  }
  if (batches == 0) throw ConfigError("validation split smaller than one batch");
  for (double* v : {&sum.l_p_exp, &sum.l_p_ste, &sum.l_c_ste, &sum.l_sparsity, &sum.l_cts,
                    &sum.l_total})
    *v /= batches;
  return sum;
}

TrainedRun train_proposed(const ExperimentConfig& cfg, const DatasetSplits& data,
                          const RunOptions& opts) {
  cfg.validate();
  if (cfg.model != ModelKind::Proposed && cfg.model != ModelKind::CosineSimilarityAblation)
    throw ConfigError("train_proposed: model must be proposed or cosine_similarity_ablation");
  RunRecord rec = new_record(cfg);
  auto sys = std::make_unique<CovertSystem>(cfg);

  run_steps(*sys, cfg, data.train, cfg.train.warmup_steps, 0, -1, false,
            Schedule{cfg.train.weight_lr, cfg.train.warmup_steps, cfg.train.warmup_steps},
            0x3a7c, rec.history, opts);

  // Phase 1: joint policy and weight learning with soft gates.
  run_steps(*sys, cfg, data.train, cfg.train.policy_steps, 1, -1, true,
            Schedule{cfg.train.weight_lr, cfg.train.policy_steps, cfg.train.policy_steps},
            0x9011c1, rec.history, opts);

  // Phase 2: sample hard architectures and retrain each from the phase-1
  // weights.
  Rng arch_rng = make_rng(cfg.seed, 0xa4c5);
  std::set<std::pair<std::vector<double>, std::vector<double>>> drawn;
  std::unique_ptr<CovertSystem> best;
  double best_loss = INFINITY;
  for (int k = 0; k < cfg.train.num_sampled_architectures; ++k) {
    GateVector ge, gs;
    for (int attempt = 0; attempt < 50; ++attempt) {
      if (cfg.train.coupled_sampling) {
        std::tie(ge, gs) = sample_architecture_pair(sys->policy, arch_rng);
      } else {
        ge = sample_architecture(sys->policy, PathId::Explicit, arch_rng);
        gs = sample_architecture(sys->policy, PathId::Stego, arch_rng);
      }
      if (drawn.insert({ge.values, gs.values}).second) break;
    }
    auto cand = std::make_unique<CovertSystem>(*sys);
    cand->gates_exp = ge;
    cand->gates_ste = gs;
    run_steps(*cand, cfg, data.train, cfg.train.retrain_steps, 2, k, false,
              Schedule{cfg.train.weight_lr, 0, cfg.train.retrain_steps},
              mix_seed(0x4e7a, k), rec.history, opts);
    const LossBreakdown v = validation_loss(*cand, cfg, data.val);
    rec.candidates.push_back({k, ge.values, gs.values, v});
    if (v.l_total < best_loss) {
      best_loss = v.l_total;
      best = std::move(cand);
      rec.selected_candidate = k;
    }
  }
  finish_record(rec, *best, cfg);
  persist(rec, *best, cfg, data, opts);
  return {std::move(rec), std::move(best)};
}

TrainedRun train_baseline(const ExperimentConfig& cfg, const DatasetSplits& data,
                          const RunOptions& opts) {
  cfg.validate();
  if (cfg.model == ModelKind::Proposed || cfg.model == ModelKind::CosineSimilarityAblation)
    throw ConfigError("train_baseline: use train_proposed for policy-learning models");
  RunRecord rec = new_record(cfg);
  auto sys = std::make_unique<CovertSystem>(cfg);
  const int constant = cfg.train.warmup_steps + cfg.train.policy_steps;
  const int steps = constant + cfg.train.retrain_steps;
  run_steps(*sys, cfg, data.train, steps, 0, -1, false,
            Schedule{cfg.train.weight_lr, constant, steps}, 0xba5e, rec.history,
            opts);
  rec.candidates.push_back({0, sys->gates_exp.values, sys->gates_ste.values,
                            validation_loss(*sys, cfg, data.val)});
  rec.selected_candidate = 0;
  finish_record(rec, *sys, cfg);
  persist(rec, *sys, cfg, data, opts);
  return {std::move(rec), std::move(sys)};
}

TrainedRun train(const ExperimentConfig& cfg, const DatasetSplits& data,
                 const RunOptions& opts) {
  if (cfg.model == ModelKind::Proposed || cfg.model == ModelKind::CosineSimilarityAblation)
    return train_proposed(cfg, data, opts);
  return train_baseline(cfg, data, opts);
}

}  // namespace covert
