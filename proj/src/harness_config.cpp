#include <functional>

#include "covert/harness.hpp"

namespace covert {

ModelKind parse_model_kind(const std::string& s) {
  if (s == "proposed") return ModelKind::Proposed;
  if (s == "stacking_baseline") return ModelKind::StackingBaseline;
  if (s == "noise_baseline") return ModelKind::NoiseBaseline;
  if (s == "standard_semcom") return ModelKind::StandardSemCom;
  if (s == "random_path") return ModelKind::RandomPath;
  if (s == "cosine_similarity_ablation") return ModelKind::CosineSimilarityAblation;
  throw ConfigError("unknown model '" + s + "'");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Proposed: return "proposed";
    case ModelKind::StackingBaseline: return "stacking_baseline";
    case ModelKind::NoiseBaseline: return "noise_baseline";
    case ModelKind::StandardSemCom: return "standard_semcom";
    case ModelKind::RandomPath: return "random_path";
    case ModelKind::CosineSimilarityAblation: return "cosine_similarity_ablation";
  }
  return "?";
}

bool uses_gated_backbone(ModelKind k) {
  return k == ModelKind::Proposed || k == ModelKind::RandomPath ||
         k == ModelKind::CosineSimilarityAblation;
}

namespace {

using Cfg = ExperimentConfig;

struct Binding {
  const char* key;
  std::function<void(Cfg&, const std::string&)> set;
  std::function<std::string(const Cfg&)> get;
};

#define BIND_DOUBLE(KEY, FIELD)                                                  \
  Binding {                                                                      \
    KEY, [](Cfg& c, const std::string& v) { c.FIELD = parse_double(KEY, v); },   \
        [](const Cfg& c) { return format_double(c.FIELD); }                      \
  }
#define BIND_INT(KEY, FIELD, TYPE)                                                       \
  Binding {                                                                              \
    KEY, [](Cfg& c, const std::string& v) { c.FIELD = static_cast<TYPE>(parse_int(KEY, v)); }, \
        [](const Cfg& c) { return std::to_string(c.FIELD); }                             \
  }
#define BIND_BOOL(KEY, FIELD)                                                 \
  Binding {                                                                   \
    KEY, [](Cfg& c, const std::string& v) { c.FIELD = parse_bool(KEY, v); }, \
        [](const Cfg& c) { return std::string(c.FIELD ? "true" : "false"); } \
  }
#define BIND_INTS(KEY, FIELD)                                                     \
  Binding {                                                                       \
    KEY, [](Cfg& c, const std::string& v) { c.FIELD = parse_int_list(KEY, v); }, \
        [](const Cfg& c) { return format_list(c.FIELD); }                         \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> b = {
      {"model", [](Cfg& c, const std::string& v) { c.model = parse_model_kind(v); },
       [](const Cfg& c) { return to_string(c.model); }},
      BIND_INT("seed", seed, std::uint64_t),
      BIND_INT("data.height", data.height, int),
      BIND_INT("data.width", data.width, int),
      BIND_INT("data.train", data.n_train, std::size_t),
      BIND_INT("data.val", data.n_val, std::size_t),
      BIND_INT("data.test", data.n_test, std::size_t),
      BIND_INT("data.seed", data.base_seed, std::uint64_t),
      BIND_INT("data.min_shapes", data.min_shapes, int),
      BIND_INT("data.max_shapes", data.max_shapes, int),
      BIND_INTS("encoder.stage_channels", stage_channels),
      BIND_INTS("encoder.stage_strides", stage_strides),
      BIND_INT("encoder.blocks_per_stage", blocks_per_stage, int),
      BIND_INT("encoder.kernel_size", kernel_size, int),
      BIND_INT("decoder.hidden", decoder_hidden, int),
      BIND_INT("decoder.modules", decoder_modules, int),
      BIND_INTS("decoder.dilations", decoder_dilations),
      BIND_DOUBLE("decoder.dropout", decoder_dropout),
      BIND_DOUBLE("loss.lambda_c", loss.lambda_c),
      BIND_DOUBLE("loss.lambda_cts", loss.lambda_cts),
      BIND_DOUBLE("loss.beta", loss.beta),
      BIND_DOUBLE("loss.gamma", loss.gamma),
      BIND_DOUBLE("loss.tau", loss.cts_temperature),
      BIND_BOOL("loss.stop_gradient", loss.cts_stop_gradient),
      {"channel.family",
       [](Cfg& c, const std::string& v) { c.channel.family = parse_channel_family(v); },
       [](const Cfg& c) { return to_string(c.channel.family); }},
      BIND_DOUBLE("channel.snr_db", channel.snr_db),
      BIND_DOUBLE("channel.nakagami_m", channel.nakagami_m),
      BIND_DOUBLE("channel.nakagami_omega", channel.nakagami_omega),
      {"channel.fading",
       [](Cfg& c, const std::string& v) {
         if (v == "per_map") c.channel.fading_granularity = FadingGranularity::PerFeatureMap;
         else if (v == "per_channel") c.channel.fading_granularity = FadingGranularity::PerChannel;
         else throw ConfigError("channel.fading must be per_map or per_channel");
       },
       [](const Cfg& c) {
         return std::string(c.channel.fading_granularity == FadingGranularity::PerChannel
                                ? "per_channel" : "per_map");
       }},
      {"attacker.conv_channels",
       [](Cfg& c, const std::string& v) {
         const auto l = parse_int_list("attacker.conv_channels", v);
         if (l.size() != 2) throw ConfigError("attacker.conv_channels needs two values");
         c.attacker.conv_channels = {l[0], l[1]};
       },
       [](const Cfg& c) {
         return format_list(std::vector<int>{c.attacker.conv_channels[0], c.attacker.conv_channels[1]});
       }},
      BIND_INT("attacker.kernel_size", attacker.kernel_size, int),
      BIND_INT("attacker.mlp_hidden", attacker.mlp_hidden, int),
      BIND_INT("attacker.train_steps", attacker.train_steps, int),
      BIND_INT("attacker.batch_size", attacker.batch_size, int),
      BIND_DOUBLE("attacker.holdout_fraction", attacker.holdout_fraction),
      BIND_DOUBLE("attacker.validation_fraction", attacker.validation_fraction),
      BIND_DOUBLE("attacker.lr", attacker.learning_rate),
      BIND_INT("attacker.eval_every", attacker.eval_every, int),
      BIND_INT("attacker.patience", attacker.patience, int),
      {"attacker.layout",
       [](Cfg& c, const std::string& v) { c.attacker.layout = parse_feature_layout(v); },
       [](const Cfg& c) { return to_string(c.attacker.layout); }},
      BIND_INT("train.warmup_steps", train.warmup_steps, int),
      BIND_INT("train.policy_steps", train.policy_steps, int),
      BIND_INT("train.retrain_steps", train.retrain_steps, int),
      BIND_INT("train.batch_size", train.batch_size, int),
      BIND_DOUBLE("train.weight_lr", train.weight_lr),
      BIND_DOUBLE("train.momentum", train.momentum),
      BIND_DOUBLE("train.weight_decay", train.weight_decay),
      BIND_DOUBLE("train.policy_lr", train.policy_lr),
      BIND_DOUBLE("train.gate_tau_start", train.gate_tau_start),
      BIND_DOUBLE("train.gate_tau_end", train.gate_tau_end),
      BIND_INT("train.sampled_architectures", train.num_sampled_architectures, int),
      BIND_BOOL("train.coupled_sampling", train.coupled_sampling),
      BIND_INT("train.log_every", train.log_every, int),
      BIND_BOOL("train.power_normalize", train.power_normalize),
      {"eval.snr_list",
       [](Cfg& c, const std::string& v) { c.eval.snr_list = parse_double_list("eval.snr_list", v); },
       [](const Cfg& c) { return format_list(c.eval.snr_list); }},
      BIND_INT("eval.attack_images", eval.attack_images, std::size_t),
      BIND_INT("eval.batch_size", eval.batch_size, int),
  };
  return b;
}

#undef BIND_DOUBLE
#undef BIND_INT
#undef BIND_BOOL
#undef BIND_INTS

}  // namespace

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : kv.values()) {
    bool found = false;
    for (const auto& b : bindings()) {
      if (key == b.key) {
        b.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path,
                                             const std::vector<std::string>& overrides) {
  KeyValueConfig kv = KeyValueConfig::from_file(path);
  kv.apply_overrides(overrides);
  return from_kv(kv);
}

KeyValueConfig ExperimentConfig::to_kv() const {
  KeyValueConfig kv;
  for (const auto& b : bindings()) kv.set(b.key, b.get(*this));
  return kv;
}

std::string ExperimentConfig::hash() const {
  KeyValueConfig kv = to_kv();
  KeyValueConfig without_seed;
  for (const auto& [k, v] : kv.values())
    if (k != "seed") without_seed.set(k, v);
  return without_seed.hash();
}

std::string ExperimentConfig::run_name() const {
  return hash() + "-s" + std::to_string(seed);
}

EncoderConfig ExperimentConfig::encoder_config() const {
  return EncoderConfig::staged({3, data.height, data.width}, stage_channels,
                               stage_strides, blocks_per_stage, kernel_size);
}

DecoderConfig ExperimentConfig::decoder_config(DecoderTask task) const {
  DecoderConfig d;
  d.in_channels = stage_channels.empty() ? 0 : stage_channels.back();
  d.hidden = decoder_hidden;
  d.out_channels = task == DecoderTask::Public ? kNumSceneClasses : 1;
  d.modules = decoder_modules;
  d.dilations = decoder_dilations;
  d.dropout = decoder_dropout;
  d.output_hw = {data.height, data.width};
  return d;
}

SceneConfig ExperimentConfig::scene_config() const {
  SceneConfig s;
  s.height = data.height;
  s.width = data.width;
  s.min_shapes = data.min_shapes;
  s.max_shapes = data.max_shapes;
  return s;
}

void ExperimentConfig::validate() const {
  if (stage_channels.empty() || stage_channels.size() != stage_strides.size())
    throw ConfigError("encoder: stage_channels and stage_strides must have equal nonzero length");
  encoder_config().validate();
  decoder_config(DecoderTask::Public).validate();
  scene_config().validate();
  loss.validate();
  channel.validate();
  attacker.validate();
  if (data.n_train == 0 || data.n_val == 0 || data.n_test == 0)
    throw ConfigError("data: split sizes must be positive");
  if (train.warmup_steps < 0 || train.policy_steps < 0 || train.retrain_steps < 0)
    throw ConfigError("train: step budgets must be nonnegative");
  if (train.batch_size < 2)
    throw ConfigError("train: batch_size must be at least 2 (contrastive negatives)");
  if (train.num_sampled_architectures <= 0)
    throw ConfigError("train: sampled_architectures must be positive");
  if (!(train.weight_lr > 0) || !(train.policy_lr > 0))
    throw ConfigError("train: learning rates must be positive");
  if (!(train.gate_tau_start > 0) || !(train.gate_tau_end > 0))
    throw ConfigError("train: gate temperatures must be positive");
  if (train.log_every <= 0) throw ConfigError("train: log_every must be positive");
  if (eval.batch_size <= 0) throw ConfigError("eval: batch_size must be positive");
}

}  // namespace covert
