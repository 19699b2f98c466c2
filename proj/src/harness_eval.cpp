#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "covert/harness.hpp"
#include "covert/plot.hpp"

namespace covert {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json loss_json(const LossBreakdown& l) {
  return {{"l_p_exp", l.l_p_exp}, {"l_p_ste", l.l_p_ste},   {"l_c_ste", l.l_c_ste},
          {"l_sparsity", l.l_sparsity}, {"l_cts", l.l_cts}, {"l_total", l.l_total}};
}

LossBreakdown loss_from(const json& j) {
  LossBreakdown l;
  l.l_p_exp = j.at("l_p_exp");
  l.l_p_ste = j.at("l_p_ste");
  l.l_c_ste = j.at("l_c_ste");
  l.l_sparsity = j.at("l_sparsity");
  l.l_cts = j.at("l_cts");
  l.l_total = j.at("l_total");
  return l;
}

json seg_json(const SegScore& s) { return {{"miou", s.miou}, {"pixel_acc", s.pixel_acc}}; }
SegScore seg_from(const json& j) { return {j.at("miou"), j.at("pixel_acc")}; }

json depth_json(const DepthScore& d) {
  return {{"abs_err", d.abs_err}, {"rel_err", d.rel_err}, {"delta1", d.delta1},
          {"delta2", d.delta2},   {"delta3", d.delta3},   {"valid_fraction", d.valid_fraction}};
}
DepthScore depth_from(const json& j) {
  return {j.at("abs_err"), j.at("rel_err"), j.at("delta1"),
          j.at("delta2"),  j.at("delta3"),  j.at("valid_fraction")};
}

json detection_json(const DetectionReport& d) {
  return {{"accuracy", d.accuracy},
          {"confusion", d.confusion},
          {"heuristic_cosine", d.heuristic_cosine},
          {"mi_proxy", d.mi_proxy},
          {"num_public", d.num_public},
          {"num_stego", d.num_stego},
          {"train_samples", d.train_samples}};
}
DetectionReport detection_from(const json& j) {
  DetectionReport d;
  d.accuracy = j.at("accuracy");
  d.confusion = j.at("confusion").get<std::array<std::array<std::int64_t, 2>, 2>>();
  d.heuristic_cosine = j.at("heuristic_cosine");
  d.mi_proxy = j.at("mi_proxy");
  d.num_public = j.at("num_public");
  d.num_stego = j.at("num_stego");
  d.train_samples = j.at("train_samples");
  return d;
}

json eval_json(const EvalRow& r) {
  json j = {{"snr_db", r.snr_db},
            {"public_explicit", seg_json(r.public_explicit)},
            {"public_stego", seg_json(r.public_stego)},
            {"covert", depth_json(r.covert)}};
  if (r.detection) j["detection"] = detection_json(*r.detection);
  return j;
}

json cost_json(const CostReport& c) {
  return {{"per_block_flops", c.per_block_flops},
          {"encoder_flops_by_path", c.encoder_flops_by_path},
          {"decoder_flops_by_task", c.decoder_flops_by_task},
          {"modules", c.modules},
          {"total_flops", c.total_flops},
          {"encoder_params", c.encoder_params},
          {"decoder_params", c.decoder_params},
          {"param_count", c.param_count}};
}
CostReport cost_from(const json& j) {
  CostReport c;
  c.per_block_flops = j.at("per_block_flops").get<std::vector<double>>();
  c.encoder_flops_by_path = j.at("encoder_flops_by_path").get<std::map<std::string, double>>();
  c.decoder_flops_by_task = j.at("decoder_flops_by_task").get<std::map<std::string, double>>();
  c.modules = j.at("modules");
  c.total_flops = j.at("total_flops");
  c.encoder_params = j.at("encoder_params");
  c.decoder_params = j.at("decoder_params");
  c.param_count = j.at("param_count");
  return c;
}

}  // namespace

json RunRecord::to_json() const {
  json history_j = json::array();
  for (const auto& p : history)
    history_j.push_back({{"phase", p.phase},
                         {"candidate", p.candidate},
                         {"step", p.step},
                         {"gate_temperature", p.gate_temperature},
                         {"loss", loss_json(p.loss)}});
  json cand_j = json::array();
  for (const auto& c : candidates)
    cand_j.push_back({{"index", c.index},
                      {"gates_exp", c.gates_exp},
                      {"gates_ste", c.gates_ste},
                      {"validation", loss_json(c.validation)}});
  json eval_j = json::array();
  for (const auto& r : evaluation) eval_j.push_back(eval_json(r));
  return {{"config", config_text},
          {"config_hash", config_hash},
          {"seed", seed},
          {"model", model},
          {"history", history_j},
          {"candidates", cand_j},
          {"selected_candidate", selected_candidate},
          {"q_explicit", q_explicit},
          {"q_stego", q_stego},
          {"gates_explicit", gates_explicit},
          {"gates_stego", gates_stego},
          {"cost", cost_json(cost)},
          {"parameter_count", parameter_count},
          {"evaluation", eval_j},
          {"checkpoints", checkpoints},
          {"finalized", finalized_}};
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  r.config_text = j.at("config");
  r.config_hash = j.at("config_hash");
  r.seed = j.at("seed");
  r.model = j.at("model");
  for (const auto& p : j.at("history"))
    r.history.push_back({p.at("phase"), p.at("candidate"), p.at("step"),
                         p.at("gate_temperature"), loss_from(p.at("loss"))});
  for (const auto& c : j.at("candidates"))
    r.candidates.push_back({c.at("index"), c.at("gates_exp").get<std::vector<double>>(),
                            c.at("gates_ste").get<std::vector<double>>(),
                            loss_from(c.at("validation"))});
  r.selected_candidate = j.at("selected_candidate");
  r.q_explicit = j.at("q_explicit").get<std::vector<double>>();
  r.q_stego = j.at("q_stego").get<std::vector<double>>();
  r.gates_explicit = j.at("gates_explicit").get<std::vector<double>>();
  r.gates_stego = j.at("gates_stego").get<std::vector<double>>();
  r.cost = cost_from(j.at("cost"));
  r.parameter_count = j.at("parameter_count");
  for (const auto& e : j.at("evaluation")) {
    EvalRow row;
    row.snr_db = e.at("snr_db");
    row.public_explicit = seg_from(e.at("public_explicit"));
    row.public_stego = seg_from(e.at("public_stego"));
    row.covert = depth_from(e.at("covert"));
    if (e.contains("detection")) row.detection = detection_from(e.at("detection"));
    r.evaluation.push_back(row);
  }
  r.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  r.finalized_ = j.value("finalized", false);
  return r;
}

std::string metric_table(const RunRecord& record) {
  std::ostringstream out;
  char buf[512];
  out << "snr_db\tmiou_exp\tpacc_exp\tmiou_ste\tpacc_ste\tabs_err\trel_err\t"
         "delta1\tdelta2\tdelta3\tattacker_acc\tcosine\tmi_proxy\n";
  for (const auto& r : record.evaluation) {
    std::snprintf(buf, sizeof buf,
                  "%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f", r.snr_db,
                  r.public_explicit.miou, r.public_explicit.pixel_acc, r.public_stego.miou,
                  r.public_stego.pixel_acc, r.covert.abs_err, r.covert.rel_err,
                  r.covert.delta1, r.covert.delta2, r.covert.delta3);
    out << buf;
    if (r.detection) {
      std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t%.6f\n", r.detection->accuracy,
                    r.detection->heuristic_cosine, r.detection->mi_proxy);
      out << buf;
    } else {
      out << "\t-\t-\t-\n";
    }
  }
  return out.str();
}

LabeledFeatureSet attack_dataset(CovertSystem& sys, const ExperimentConfig& cfg,
                                 const SceneSet& test, double snr_db) {
  std::size_t n = cfg.eval.attack_images ? cfg.eval.attack_images : test.size();
  n = std::min(n, test.size());
  const Batch imgs = make_batch(test.scenes, 0, n);
  ChannelConfig ch = cfg.channel;
  ch.snr_db = snr_db;
  const bool norm = cfg.train.power_normalize;
  const PathFeatureFn fn = [&](const Tensor& x) { return sys.features(x, norm); };
  std::uint64_t snr_bits;
  std::memcpy(&snr_bits, &snr_db, sizeof snr_bits);
  return build_attack_dataset(fn, imgs.images, ch, mix_seed(mix_seed(cfg.seed, 0xa77ac), snr_bits),
                              cfg.eval.batch_size);
}

DetectionReport attack(CovertSystem& sys, const ExperimentConfig& cfg, const SceneSet& test,
                       double snr_db, TrainedAttacker* out) {
  const LabeledFeatureSet data = attack_dataset(sys, cfg, test, snr_db);
  return run_detection(data, cfg.attacker, mix_seed(cfg.seed, 0xde7), cfg.loss.cts_temperature,
                       out);
}

RunRecord evaluate(const RunRecord& record, CovertSystem& sys, const ExperimentConfig& cfg,
                   const DatasetSplits& data, const std::vector<double>& snr_list,
                   const EvalOptions& opts) {
  RunRecord out = record;
  out.evaluation.clear();
  const SceneSet& test = data.test;
  const bool semcom = sys.kind() == ModelKind::StandardSemCom;
  const std::size_t bs = static_cast<std::size_t>(cfg.eval.batch_size);
  for (std::size_t si = 0; si < snr_list.size(); ++si) {
    ChannelConfig ch = cfg.channel;
    ch.snr_db = snr_list[si];
    ConfusionMatrix cm_e(kNumSceneClasses), cm_s(kNumSceneClasses);
    DepthAccumulator depth;
    for (std::size_t b = 0; b < test.size(); b += bs) {
      const Batch batch = make_batch(test.scenes, b, std::min(test.size(), b + bs));
      const auto [ze, zs] = sys.features(batch.images, cfg.train.power_normalize);
      const std::uint64_t s = mix_seed(mix_seed(cfg.seed, 0xe7a1), si * 1000003 + b);
      const ReceivedFeature rx_e = transmit(ze, ch, mix_seed(s, 0));
      const ReceivedFeature rx_s = transmit(zs, ch, mix_seed(s, 1));
      cm_e.add(argmax_labels(sys.public_dec.forward(rx_e.data, false)), batch.labels);
      if (!semcom)
        cm_s.add(argmax_labels(sys.public_dec.forward(rx_s.data, false)), batch.labels);
      depth.add(sys.covert_dec.forward(rx_s.data, false).span(), batch.depth.span());
    }
    EvalRow row;
    row.snr_db = ch.snr_db;
    row.public_explicit = cm_e.score();
    // Standard SemCom sends the public task on its own stream only.
    row.public_stego = semcom ? row.public_explicit : cm_s.score();
    row.covert = depth.score();
    if (opts.detection) {
      TrainedAttacker willie;
      row.detection = attack(sys, cfg, test, ch.snr_db, &willie);
      if (opts.output_dir) {
        Checkpoint ck;
        ck.add_params(willie.net.params());
        fs::create_directories(*opts.output_dir);
        const fs::path p = *opts.output_dir / ("attacker_snr" + format_double(ch.snr_db) + ".ckpt");
        ck.save(p);
        out.checkpoints.push_back(p.string());
      }
    }
    out.evaluation.push_back(row);
  }
  out.finalize();
  if (opts.output_dir) write_run_outputs(out, *opts.output_dir);
  return out;
}

void render_policy_heatmap(const RunRecord& record, const fs::path& path) {
  std::vector<std::string> cols;
  for (std::size_t l = 0; l < record.q_explicit.size(); ++l) cols.push_back(std::to_string(l + 1));
  write_heatmap(path, "Execute probability per block", {"Explicit", "Stego"}, cols,
                {record.q_explicit, record.q_stego});
}

void write_run_outputs(const RunRecord& record, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "record.json");
    out << record.to_json().dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "metrics.jsonl");
    for (const auto& p : record.history)
      out << json{{"kind", "train"},
                  {"phase", p.phase},
                  {"candidate", p.candidate},
                  {"step", p.step},
                  {"gate_temperature", p.gate_temperature},
                  {"loss", loss_json(p.loss)}}
                 .dump()
          << "\n";
    for (const auto& c : record.candidates)
      out << json{{"kind", "validation"}, {"candidate", c.index}, {"loss", loss_json(c.validation)}}
                 .dump()
          << "\n";
    for (const auto& r : record.evaluation) {
      json j = eval_json(r);
      j["kind"] = "eval";
      out << j.dump() << "\n";
    }
  }
  if (!record.q_explicit.empty()) render_policy_heatmap(record, dir / "policy_heatmap.svg");

  std::vector<Series> loss_series;
  for (const auto& p : record.history) {
    const std::string name = p.phase == 2 ? "retrain " + std::to_string(p.candidate)
                                          : (p.phase == 1 ? "policy" : "train");
    if (loss_series.empty() || loss_series.back().name != name) loss_series.push_back({name, {}, {}});
    loss_series.back().x.push_back(p.step);
    loss_series.back().y.push_back(p.loss.l_total);
  }
  if (!loss_series.empty())
    write_line_plot(dir / "loss.svg", "Training loss", "step", "total loss", loss_series);

  if (record.evaluation.empty()) return;
  {
    std::ofstream out(dir / "metrics_table.tsv");
    out << metric_table(record);
  }
  Series miou_e{"mIoU Explicit", {}, {}}, miou_s{"mIoU Stego", {}, {}}, d1{"delta1 / 100", {}, {}};
  Series acc{"attacker accuracy", {}, {}}, cosine{"mean cosine", {}, {}};
  for (const auto& r : record.evaluation) {
    miou_e.x.push_back(r.snr_db);
    miou_e.y.push_back(r.public_explicit.miou);
    miou_s.x.push_back(r.snr_db);
    miou_s.y.push_back(r.public_stego.miou);
    d1.x.push_back(r.snr_db);
    d1.y.push_back(r.covert.delta1 / 100.0);
    if (r.detection) {
      acc.x.push_back(r.snr_db);
      acc.y.push_back(r.detection->accuracy);
      cosine.x.push_back(r.snr_db);
      cosine.y.push_back(r.detection->heuristic_cosine);
    }
  }
  write_line_plot(dir / "task_vs_snr.svg", "Task quality", "SNR (dB)", "score",
                  {miou_e, miou_s, d1});
  if (!acc.x.empty())
    write_line_plot(dir / "detection_vs_snr.svg", "Detection", "SNR (dB)", "value",
                    {acc, cosine});
}

}  // namespace covert
