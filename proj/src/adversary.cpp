#include "covert/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "covert/objectives.hpp"
#include "covert/optim.hpp"

namespace covert {

FeatureLayout parse_feature_layout(const std::string& s) {
  if (s == "pooled") return FeatureLayout::PooledChannels;
  if (s == "flatten") return FeatureLayout::Flattened;
  throw ConfigError("unknown attacker layout '" + s + "'");
}

std::string to_string(FeatureLayout l) {
  return l == FeatureLayout::PooledChannels ? "pooled" : "flatten";
}

void AttackerConfig::validate() const {
  if (conv_channels[0] <= 0 || conv_channels[1] <= 0 || mlp_hidden <= 0)
    throw ConfigError("AttackerConfig: layer widths must be positive");
  if (kernel_size <= 0 || kernel_size % 2 == 0)
    throw ConfigError("AttackerConfig: kernel size must be odd and positive");
  if (train_steps <= 0 || batch_size <= 0 || eval_every <= 0 || patience <= 0)
    throw ConfigError("AttackerConfig: step counts must be positive");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ConfigError("AttackerConfig: holdout_fraction must lie in (0,1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("AttackerConfig: validation_fraction must lie in [0,1)");
  if (!(learning_rate > 0)) throw ConfigError("AttackerConfig: learning rate must be positive");
}

LabeledFeatureSet build_attack_dataset(const PathFeatureFn& features,
                                       const Tensor& images,
                                       const ChannelConfig& channel,
                                       std::uint64_t rng_seed, int batch_size) {
  const int n = images.shape().n;
  if (n == 0) throw std::invalid_argument("build_attack_dataset: empty dataset");
  LabeledFeatureSet out;
  std::vector<Tensor> exp_parts, ste_parts;
  for (int b = 0; b < n; b += batch_size) {
    const int e = std::min(n, b + batch_size);
    std::vector<Tensor> imgs;
    for (int i = b; i < e; ++i) imgs.push_back(images.slice(i));
    auto [exp, ste] = features(Tensor::stack(imgs));
    require_same_shape(exp, ste, "build_attack_dataset");
    for (int i = 0; i < e - b; ++i) {
      exp_parts.push_back(exp.slice(i));
      ste_parts.push_back(ste.slice(i));
    }
  }
  out.clean_explicit = Tensor::stack(exp_parts);
  out.clean_stego = Tensor::stack(ste_parts);
  std::vector<Tensor> rx;
  rx.reserve(2 * n);
  for (int i = 0; i < n; ++i) {
    rx.push_back(transmit(exp_parts[i], channel, mix_seed(rng_seed, 2ULL * i)).data);
    out.labels.push_back(0);
    out.image_ids.push_back(i);
    rx.push_back(transmit(ste_parts[i], channel, mix_seed(rng_seed, 2ULL * i + 1)).data);
    out.labels.push_back(1);
    out.image_ids.push_back(i);
  }
  out.features = Tensor::stack(rx);
  return out;
}

Tensor to_sequence(const Tensor& f, FeatureLayout layout) {
  const Shape& s = f.shape();
  if (layout == FeatureLayout::Flattened) {
    Tensor out = f;
    out.reshape({s.n, 1, 1, static_cast<int>(s.sample_size())});
    return out;
  }
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  Tensor out({s.n, 4, 1, s.c});
  for (int n = 0; n < s.n; ++n) {
    const Real* p = f.sample(n);
    for (int c = 0; c < s.c; ++c) {
      const Real* q = p + c * hw;
      double sum = 0.0, sq = 0.0;
      double mx = q[0], mn = q[0];
      for (std::size_t i = 0; i < hw; ++i) {
        sum += q[i];
        sq += static_cast<double>(q[i]) * q[i];
        mx = std::max<double>(mx, q[i]);
        mn = std::min<double>(mn, q[i]);
      }
      const double mean = sum / hw;
      out.at(n, 0, 0, c) = static_cast<Real>(mean);
      out.at(n, 1, 0, c) = static_cast<Real>(std::sqrt(std::max(0.0, sq / hw - mean * mean)));
      out.at(n, 2, 0, c) = static_cast<Real>(mx);
      out.at(n, 3, 0, c) = static_cast<Real>(mn);
    }
  }
  return out;
}

namespace {

kernels::ConvGeometry conv1d(int k, int stride) {
  kernels::ConvGeometry g;
  g.kernel_h = 1;
  g.kernel_w = k;
  g.stride_w = stride;
  g.pad_w = k / 2;
  return g;
}

Tensor gather(const Tensor& t, const std::vector<std::size_t>& idx) {
  Shape s = t.shape();
  s.n = static_cast<int>(idx.size());
  Tensor out(s);
  const std::size_t per = s.sample_size();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(t.sample(static_cast<int>(idx[i])), t.sample(static_cast<int>(idx[i])) + per,
              out.sample(static_cast<int>(i)));
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

}  // namespace

Attacker::Attacker(const AttackerConfig& cfg, int seq_channels, int seq_length,
                   std::uint64_t seed)
    : seq_length_(seq_length) {
  cfg.validate();
  const int stride = seq_length > 256 ? 4 : 1;
  const auto g = conv1d(cfg.kernel_size, stride);
  conv1_ = Conv2d("attacker.conv1", seq_channels, cfg.conv_channels[0], g);
  conv2_ = Conv2d("attacker.conv2", cfg.conv_channels[0], cfg.conv_channels[1], g);
  const int l2 = g.out_w(g.out_w(seq_length));
  flat_ = cfg.conv_channels[1] * l2;
  fc1_ = Linear("attacker.fc1", flat_, cfg.mlp_hidden);
  fc2_ = Linear("attacker.fc2", cfg.mlp_hidden, 1);
  Rng rng = make_rng(seed, 0xa7);
  conv1_.init_kaiming(rng);
  conv2_.init_kaiming(rng);
  fc1_.init_kaiming(rng);
  fc2_.init_kaiming(rng);
  mean_.assign(static_cast<std::size_t>(seq_channels) * seq_length, Real(0));
  inv_std_.assign(mean_.size(), Real(1));
}

void Attacker::fit_standardizer(const Tensor& seq) {
  const std::size_t d = seq.shape().sample_size();
  if (d != mean_.size()) throw ConfigError("Attacker: sequence shape mismatch");
  const int n = seq.shape().n;
  for (std::size_t k = 0; k < d; ++k) {
    double s = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = seq.sample(i)[k];
      s += v;
      sq += v * v;
    }
    const double m = s / n;
    const double sd = std::sqrt(std::max(0.0, sq / n - m * m));
    mean_[k] = static_cast<Real>(m);
    inv_std_[k] = static_cast<Real>(sd > 1e-8 ? 1.0 / sd : 1.0);
  }
}

Tensor Attacker::standardize(const Tensor& seq) const {
  Tensor out = seq;
  const std::size_t d = mean_.size();
  if (seq.shape().sample_size() != d) throw ConfigError("Attacker: sequence shape mismatch");
  for (int i = 0; i < seq.shape().n; ++i) {
    Real* p = out.sample(i);
    for (std::size_t k = 0; k < d; ++k) p[k] = (p[k] - mean_[k]) * inv_std_[k];
  }
  return out;
}

Tensor Attacker::forward(const Tensor& x, Trace* trace) const {
  Tensor h1 = relu(conv1_.forward(x));
  Tensor h2 = relu(conv2_.forward(h1));
  Tensor a3 = relu(fc1_.forward(h2));
  Tensor logits = fc2_.forward(a3);
  if (trace) {
    trace->x = x;
    trace->h1 = std::move(h1);
    trace->h2 = std::move(h2);
    trace->a3 = std::move(a3);
    trace->logits = logits;
  }
  return logits;
}

void Attacker::backward(const Trace& t, const Tensor& dlogits) {
  Tensor g = fc2_.backward(t.a3, dlogits, true);
  g = relu_backward(t.a3, g);
  g = fc1_.backward(t.h2, g, true);
  g.reshape(t.h2.shape());
  g = relu_backward(t.h2, g);
  g = conv2_.backward(t.h1, g, true);
  g = relu_backward(t.h1, g);
  conv1_.backward(t.x, g, false);
}

ParamRefs Attacker::params() {
  ParamRefs out;
  conv1_.collect(out);
  conv2_.collect(out);
  fc1_.collect(out);
  fc2_.collect(out);
  return out;
}

std::vector<int> Attacker::predict(const Tensor& seq) const {
  const Tensor logits = forward(standardize(seq));
  std::vector<int> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] > 0 ? 1 : 0;
  return out;
}

double bce_with_logits(const Tensor& logits, const std::vector<int>& labels,
                       Tensor* grad) {
  if (logits.size() != labels.size())
    throw ConfigError("bce_with_logits: label count mismatch");
  const double n = static_cast<double>(labels.size());
  if (grad) *grad = Tensor(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double z = logits[i];
    const double y = labels[i];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    if (grad) (*grad)[i] = static_cast<Real>((1.0 / (1.0 + std::exp(-z)) - y) / n);
  }
  return total / n;
}

AttackerSplit split_by_image(const LabeledFeatureSet& data,
                             const AttackerConfig& cfg, std::uint64_t seed) {
  std::vector<int> ids(data.image_ids);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng = make_rng(seed, 0x5b);
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::size_t n_hold =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.holdout_fraction * ids.size())));
  const std::size_t rest = ids.size() - std::min(n_hold, ids.size());
  const std::size_t n_val = static_cast<std::size_t>(std::lround(cfg.validation_fraction * rest));
  std::map<int, int> role;  // 0 train, 1 validation, 2 holdout
  for (std::size_t i = 0; i < ids.size(); ++i)
    role[ids[i]] = i < n_hold ? 2 : (i < n_hold + n_val ? 1 : 0);
  AttackerSplit s;
  for (std::size_t i = 0; i < data.size(); ++i) {
    switch (role[data.image_ids[i]]) {
      case 0: s.train.push_back(i); break;
      case 1: s.validation.push_back(i); break;
      default: s.holdout.push_back(i); break;
    }
  }
  return s;
}

TrainedAttacker train_attacker(const LabeledFeatureSet& data,
                               const AttackerConfig& cfg, std::uint64_t rng_seed) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train_attacker: empty dataset");
  if (data.labels.size() != data.image_ids.size() ||
      static_cast<int>(data.size()) != data.features.shape().n)
    throw ConfigError("train_attacker: inconsistent dataset");
  const auto pos = std::count(data.labels.begin(), data.labels.end(), 1);
  const auto neg = std::count(data.labels.begin(), data.labels.end(), 0);
  if (pos + neg != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("train_attacker: labels must be 0 or 1");
  if (pos != neg) throw std::invalid_argument("train_attacker: unbalanced dataset");

  AttackerSplit split = split_by_image(data, cfg, rng_seed);
  if (split.train.empty()) throw std::invalid_argument("train_attacker: no training samples");
  const Tensor seq_raw = to_sequence(data.features, cfg.layout);
  const Shape ss = seq_raw.shape();
  TrainedAttacker out{Attacker(cfg, ss.c, ss.w, mix_seed(rng_seed, 1)), split, 0, 0.0};
  Attacker& net = out.net;
  net.fit_standardizer(gather(seq_raw, split.train));
  const Tensor seq = net.standardize(seq_raw);
  const Tensor val_x = split.validation.empty() ? Tensor() : gather(seq, split.validation);
  const auto val_y = gather_labels(data.labels, split.validation);

  ParamRefs params = net.params();
  AdamParams opt(params, cfg.learning_rate);
  Rng rng = make_rng(rng_seed, 0xb7);
  std::vector<std::size_t> order = split.train;
  std::size_t cursor = order.size();
  double best = INFINITY;
  int bad = 0;
  std::vector<Tensor> best_values;
  auto snapshot = [&] {
    best_values.clear();
    for (Param* p : params) best_values.push_back(p->value);
  };
  snapshot();
  for (int step = 1; step <= cfg.train_steps; ++step) {
    std::vector<std::size_t> batch;
    while (static_cast<int>(batch.size()) < cfg.batch_size) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
      if (batch.size() >= order.size()) break;
    }
    Attacker::Trace trace;
    const Tensor logits = net.forward(gather(seq, batch), &trace);
    Tensor dlogits;
    bce_with_logits(logits, gather_labels(data.labels, batch), &dlogits);
    zero_grads(params);
    net.backward(trace, dlogits);
    opt.step();
    out.steps_run = step;
    if (!split.validation.empty() && step % cfg.eval_every == 0) {
      const double v = bce_with_logits(net.forward(val_x), val_y, nullptr);
      if (v < best - 1e-6) {
        best = v;
        bad = 0;
        snapshot();
      } else if (++bad >= cfg.patience) {
        break;
      }
    }
  }
  if (!split.validation.empty() && std::isfinite(best)) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
    out.best_validation_loss = best;
  } else {
    out.best_validation_loss = NAN;
  }
  return out;
}

HeuristicScores heuristic_scores(const Tensor& exp_features,
                                 const Tensor& ste_features, double tau) {
  HeuristicScores h;
  h.cosine = mean_paired_cosine(exp_features, ste_features);
  h.mi_proxy = 1.0 - contrastive_loss(exp_features, ste_features, tau).value;
  return h;
}

DetectionReport evaluate_attacker(const TrainedAttacker& attacker,
                                  const LabeledFeatureSet& data,
                                  const std::vector<std::size_t>& indices,
                                  const AttackerConfig& cfg) {
  // Balance the evaluation set by trimming the majority class.
  std::vector<std::size_t> by_label[2];
  for (auto i : indices) by_label[data.labels[i]].push_back(i);
  const std::size_t keep = std::min(by_label[0].size(), by_label[1].size());
  std::vector<std::size_t> eval;
  for (int c = 0; c < 2; ++c)
    eval.insert(eval.end(), by_label[c].begin(), by_label[c].begin() + keep);
  std::sort(eval.begin(), eval.end());
  if (eval.empty()) throw std::invalid_argument("evaluate_attacker: empty evaluation set");
  const auto pred = attacker.net.predict(to_sequence(gather(data.features, eval), cfg.layout));
  DetectionReport r;
  for (std::size_t k = 0; k < eval.size(); ++k)
    ++r.confusion[data.labels[eval[k]]][pred[k]];
  r.num_public = r.confusion[0][0] + r.confusion[0][1];
  r.num_stego = r.confusion[1][0] + r.confusion[1][1];
  r.accuracy = static_cast<double>(r.confusion[0][0] + r.confusion[1][1]) /
               static_cast<double>(eval.size());
  r.train_samples = static_cast<std::int64_t>(attacker.split.train.size());
  return r;
}

DetectionReport run_detection(const LabeledFeatureSet& data,
                              const AttackerConfig& cfg, std::uint64_t rng_seed,
                              double tau, TrainedAttacker* out) {
  TrainedAttacker trained = train_attacker(data, cfg, rng_seed);
  DetectionReport r = evaluate_attacker(trained, data, trained.split.holdout, cfg);
  if (!data.clean_explicit.empty()) {
    std::vector<std::size_t> rows;
    for (auto i : trained.split.holdout)
      if (data.labels[i] == 0) rows.push_back(static_cast<std::size_t>(data.image_ids[i]));
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    if (!rows.empty()) {
      const auto h = heuristic_scores(gather(data.clean_explicit, rows),
                                      gather(data.clean_stego, rows), tau);
      r.heuristic_cosine = h.cosine;
      r.mi_proxy = h.mi_proxy;
    }
  }
  if (out) *out = std::move(trained);
  return r;
}

}  // namespace covert
