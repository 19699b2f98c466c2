#pragma once

// Experiment orchestration: configuration, the two-phase training of the
// gated dual-path system, the baselines, evaluation sweeps and reporting.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "covert/adversary.hpp"
#include "covert/checkpoint.hpp"
#include "covert/codec.hpp"
#include "covert/complexity.hpp"
#include "covert/config.hpp"
#include "covert/datagen.hpp"
#include "covert/metrics.hpp"
#include "covert/objectives.hpp"

namespace covert {

enum class ModelKind {
  Proposed,
  StackingBaseline,
  NoiseBaseline,
  StandardSemCom,
  RandomPath,
  CosineSimilarityAblation,
};
ModelKind parse_model_kind(const std::string& s);
std::string to_string(ModelKind k);
/// Kinds whose two transmissions come from one gated backbone.
bool uses_gated_backbone(ModelKind k);

struct DataConfig {
  int height = 64;
  int width = 64;
  std::size_t n_train = 512;
  std::size_t n_val = 64;
  std::size_t n_test = 128;
  std::uint64_t base_seed = 1000;
  int min_shapes = 2;
  int max_shapes = 5;
};

struct TrainConfig {
  /// Weight-only steps with every block executed before policy learning.
  int warmup_steps = 500;
  int policy_steps = 2000;
  int retrain_steps = 3000;
  int batch_size = 4;
  double weight_lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double policy_lr = 0.01;
  double gate_tau_start = 5.0;
  double gate_tau_end = 0.5;
  int num_sampled_architectures = 3;
  /// Draw both paths' architectures from shared uniforms.
  bool coupled_sampling = true;
  int log_every = 50;
  /// Transmit features at unit mean power per sample.
  bool power_normalize = true;
};

struct EvalConfig {
  std::vector<double> snr_list{-6, -3, 0, 3, 6};
  /// Test images used to build the attacker's dataset; 0 means all.
  std::size_t attack_images = 0;
  int batch_size = 32;
};

struct ExperimentConfig {
  ModelKind model = ModelKind::Proposed;
  std::uint64_t seed = 0;
  DataConfig data;
  std::vector<int> stage_channels{16, 32, 64, 64};
  std::vector<int> stage_strides{1, 2, 2, 2};
  int blocks_per_stage = 2;
  int kernel_size = 3;
  int decoder_hidden = 64;
  int decoder_modules = 2;
  std::vector<int> decoder_dilations{1, 2};
  double decoder_dropout = 0.1;
  LossWeights loss;
  ChannelConfig channel;
  AttackerConfig attacker;
  TrainConfig train;
  EvalConfig eval;

  /// Unknown keys are rejected.
  static ExperimentConfig from_kv(const KeyValueConfig& kv);
  static ExperimentConfig from_file(const std::filesystem::path& path,
                                    const std::vector<std::string>& overrides = {});
  /// Every field, fully resolved.
  KeyValueConfig to_kv() const;
  /// Hash of the resolved configuration without the seed.
  std::string hash() const;
  /// "<hash>-s<seed>"
  std::string run_name() const;

  EncoderConfig encoder_config() const;
  DecoderConfig decoder_config(DecoderTask task) const;
  SceneConfig scene_config() const;
  void validate() const;
};

/// Model weights and inference gates for any of the model kinds.
class CovertSystem {
 public:
  explicit CovertSystem(const ExperimentConfig& cfg);

  ModelKind kind() const { return kind_; }
  const EncoderConfig& encoder_config() const { return enc_cfg_; }

  /// Shared backbone, or the public / segmentation encoder for baselines.
  Encoder encoder;
  /// Covert (stacking, noise) or depth (standard SemCom) encoder.
  std::optional<Encoder> aux;
  GatePolicy policy;
  GateVector gates_exp, gates_ste;  // hard gates used at inference
  double noise_scale = 1.0;         // noise baseline's learnable amplitude
  Decoder public_dec;
  Decoder covert_dec;

  /// Pre-channel features (Explicit, Stego) in evaluation mode.
  std::pair<Tensor, Tensor> features(const Tensor& images, bool power_normalize);

  /// Trainable tensors except gate logits.
  ParamRefs weight_params();
  std::uint64_t parameter_count();

  Checkpoint checkpoint();
  void restore(const Checkpoint& ck);

 private:
  ModelKind kind_;
  EncoderConfig enc_cfg_;
};

struct LossPoint {
  int phase = 1;       // 0 weight-only (warm-up, baselines), 1 policy, 2 retraining
  int candidate = -1;  // architecture index in phase 2
  int step = 0;
  double gate_temperature = 0.0;
  LossBreakdown loss;
};

struct CandidateRecord {
  int index = 0;
  std::vector<double> gates_exp, gates_ste;
  LossBreakdown validation;
};

struct EvalRow {
  double snr_db = 0.0;
  SegScore public_explicit;
  SegScore public_stego;
  DepthScore covert;
  std::optional<DetectionReport> detection;
};

struct RunRecord {
  std::string config_text;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string model;
  std::vector<LossPoint> history;
  std::vector<CandidateRecord> candidates;
  int selected_candidate = -1;
  std::vector<double> q_explicit, q_stego;  // execute probabilities
  std::vector<double> gates_explicit, gates_stego;
  CostReport cost;
  std::uint64_t parameter_count = 0;
  std::vector<EvalRow> evaluation;
  std::vector<std::string> checkpoints;

  bool finalized() const { return finalized_; }
  void finalize() { finalized_ = true; }
  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);

 private:
  bool finalized_ = false;
};

/// Metric table rows rendered with fixed six-decimal precision.
std::string metric_table(const RunRecord& record);

struct RunOptions {
  /// When set, outputs go to <output_root>/<run_name>/.
  std::optional<std::filesystem::path> output_root;
  /// Called with each logged loss point.
  std::function<void(const LossPoint&)> on_log;
};

struct TrainedRun {
  RunRecord record;
  std::unique_ptr<CovertSystem> system;
};

DatasetSplits make_datasets(const ExperimentConfig& cfg);

/// Policy learning with Gumbel-Softmax gates, then retraining of sampled
/// hard architectures; the candidate with the lowest validation total loss
/// is kept.
TrainedRun train_proposed(const ExperimentConfig& cfg, const DatasetSplits& data,
                          const RunOptions& opts = {});
/// Baselines and ablations without a learned policy.
TrainedRun train_baseline(const ExperimentConfig& cfg, const DatasetSplits& data,
                          const RunOptions& opts = {});
/// Dispatches on cfg.model.
TrainedRun train(const ExperimentConfig& cfg, const DatasetSplits& data,
                 const RunOptions& opts = {});

/// Validation loss of a system with hard gates at the configured SNR.
LossBreakdown validation_loss(CovertSystem& sys, const ExperimentConfig& cfg,
                              const SceneSet& val);

struct EvalOptions {
  bool detection = true;
  std::optional<std::filesystem::path> output_dir;  // tables and plots
};

/// Task metrics and detection reports per SNR on the test split. Returns a
/// finalized copy of `record` with the evaluation rows attached.
RunRecord evaluate(const RunRecord& record, CovertSystem& sys,
                   const ExperimentConfig& cfg, const DatasetSplits& data,
                   const std::vector<double>& snr_list, const EvalOptions& opts = {});

/// Attacker dataset for one SNR drawn from the test split.
LabeledFeatureSet attack_dataset(CovertSystem& sys, const ExperimentConfig& cfg,
                                 const SceneSet& test, double snr_db);
DetectionReport attack(CovertSystem& sys, const ExperimentConfig& cfg,
                       const SceneSet& test, double snr_db,
                       TrainedAttacker* out = nullptr);

/// Heatmap of per-block execute probabilities for both paths.
void render_policy_heatmap(const RunRecord& record, const std::filesystem::path& path);

/// record.json, metrics.jsonl, the metric table and plots.
void write_run_outputs(const RunRecord& record, const std::filesystem::path& dir);

}  // namespace covert
