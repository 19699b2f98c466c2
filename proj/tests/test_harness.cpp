#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "covert/harness.hpp"

using namespace covert;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(ModelKind kind = ModelKind::Proposed) {
  ExperimentConfig c;
  c.model = kind;
  c.seed = 3;
  c.data.height = c.data.width = 16;
  c.data.n_train = 16;
  c.data.n_val = 4;
  c.data.n_test = 16;
  c.stage_channels = {4, 8};
  c.stage_strides = {1, 2};
  c.decoder_hidden = 8;
  c.train.warmup_steps = 4;
  c.train.policy_steps = 8;
  c.train.retrain_steps = 4;
  c.train.num_sampled_architectures = 2;
  c.train.log_every = 2;
  c.attacker.train_steps = 20;
  c.attacker.eval_every = 5;
  c.eval.snr_list = {-6, -3, 0, 3, 6};
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("proposed run trains, selects a candidate and evaluates") {
  const auto cfg = tiny();
  const auto data = make_datasets(cfg);
  int logged = 0;
  RunOptions opts;
  opts.on_log = [&](const LossPoint&) { ++logged; };
  auto run = train(cfg, data, opts);
  CHECK(logged > 0);
  CHECK(run.record.candidates.size() == 2);
  CHECK(run.record.selected_candidate >= 0);
  CHECK(run.record.q_explicit.size() == 4);
  for (const auto& p : run.record.history) CHECK(std::isfinite(p.loss.l_total));
  bool saw[3] = {false, false, false};
  for (const auto& p : run.record.history) saw[p.phase] = true;
  CHECK((saw[0] && saw[1] && saw[2]));

  const auto rec = evaluate(run.record, *run.system, cfg, data, cfg.eval.snr_list);
  CHECK(rec.finalized());
  REQUIRE(rec.evaluation.size() == 5);
  for (const auto& row : rec.evaluation) {
    REQUIRE(row.detection.has_value());
    CHECK(row.detection->num_public == row.detection->num_stego);
    CHECK(row.public_explicit.miou >= 0.0);
    CHECK(row.covert.abs_err >= 0.0);
  }
  CHECK(metric_table(rec).find("-6.000000") != std::string::npos);
}

TEST_CASE("runs are reproducible under a fixed seed") {
  auto cfg = tiny();
  cfg.eval.snr_list = {0};
  const auto data = make_datasets(cfg);
  auto a = train(cfg, data);
  auto b = train(cfg, data);
  const auto ra = evaluate(a.record, *a.system, cfg, data, cfg.eval.snr_list);
  const auto rb = evaluate(b.record, *b.system, cfg, data, cfg.eval.snr_list);
  CHECK(metric_table(ra) == metric_table(rb));
  CHECK(ra.gates_explicit == rb.gates_explicit);
}

TEST_CASE("a single sampled architecture yields one candidate") {
  auto cfg = tiny();
  cfg.train.num_sampled_architectures = 1;
  const auto run = train(cfg, make_datasets(cfg));
  CHECK(run.record.candidates.size() == 1);
  CHECK(run.record.selected_candidate == 0);
}

TEST_CASE("noiseless SNR sentinel evaluates without channel noise") {
  auto cfg = tiny();
  const auto data = make_datasets(cfg);
  auto run = train(cfg, data);
  EvalOptions no_det;
  no_det.detection = false;
  const auto a = evaluate(run.record, *run.system, cfg, data, {kNoiselessSnr}, no_det);
  const auto b = evaluate(run.record, *run.system, cfg, data, {kNoiselessSnr}, no_det);
  REQUIRE(a.evaluation.size() == 1);
  CHECK(std::isinf(a.evaluation[0].snr_db));
  CHECK_FALSE(a.evaluation[0].detection.has_value());
  CHECK(a.evaluation[0].covert.abs_err == b.evaluation[0].covert.abs_err);
}

TEST_CASE("every model kind trains and reports its cost") {
  for (auto kind : {ModelKind::StackingBaseline, ModelKind::NoiseBaseline, ModelKind::StandardSemCom,
                    ModelKind::RandomPath, ModelKind::CosineSimilarityAblation}) {
    CAPTURE(to_string(kind));
    auto cfg = tiny(kind);
    cfg.eval.snr_list = {6};
    const auto data = make_datasets(cfg);
    auto run = train(cfg, data);
    CHECK(run.record.cost.total_flops > 0.0);
    CHECK(run.record.parameter_count > 0);
    const auto rec = evaluate(run.record, *run.system, cfg, data, cfg.eval.snr_list);
    CHECK(rec.evaluation.size() == 1);
  }
}

TEST_CASE("stacking baseline carries twice the encoder parameters") {
  auto p = tiny();
  auto s = tiny(ModelKind::StackingBaseline);
  CovertSystem a(p), b(s);
  CHECK(b.parameter_count() - a.parameter_count() ==
        encoder_params(a.encoder_config()));
}

TEST_CASE("record JSON round trip and run outputs") {
  TempDir t("covert_harness_out");
  auto cfg = tiny();
  cfg.eval.snr_list = {0, 6};
  const auto data = make_datasets(cfg);
  RunOptions opts;
  opts.output_root = t.path;
  auto run = train(cfg, data, opts);
  const fs::path dir = t.path / cfg.run_name();
  EvalOptions eo;
  eo.output_dir = dir;
  const auto rec = evaluate(run.record, *run.system, cfg, data, cfg.eval.snr_list, eo);
  write_run_outputs(rec, dir);

  const auto back = RunRecord::from_json(rec.to_json());
  CHECK(back.to_json() == rec.to_json());
  CHECK(metric_table(back) == metric_table(rec));

  for (auto f : {"config.cfg", "splits.txt", "model.ckpt", "record.json", "metrics.jsonl",
                 "policy_heatmap.svg", "loss.svg", "metrics_table.tsv", "task_vs_snr.svg",
                 "detection_vs_snr.svg"})
    CHECK_MESSAGE(fs::exists(dir / f), f);

  // A checkpoint restores an equivalent system.
  CovertSystem again(cfg);
  again.restore(Checkpoint::load(dir / "model.ckpt"));
  const auto r2 = evaluate(rec, again, cfg, data, {0}, EvalOptions{false, {}});
  const auto r1 = evaluate(rec, *run.system, cfg, data, {0}, EvalOptions{false, {}});
  CHECK(r2.evaluation[0].covert.abs_err == doctest::Approx(r1.evaluation[0].covert.abs_err).epsilon(1e-6));

  std::ifstream jl(dir / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(jl, line)) {
    CHECK_NOTHROW((void)nlohmann::json::parse(line));
    ++lines;
  }
  CHECK(lines > 0);
}

TEST_CASE("uniform policy renders a flat heatmap") {
  TempDir t("covert_heatmap");
  fs::create_directories(t.path);
  RunRecord r;
  r.q_explicit.assign(4, 0.5);
  r.q_stego.assign(4, 0.5);
  render_policy_heatmap(r, t.path / "h.svg");
  std::ifstream in(t.path / "h.svg");
  const std::string s{std::istreambuf_iterator<char>(in), {}};
  // Eight cells, one colour.
  std::set<std::string> fills;
  int cells = 0;
  for (std::size_t at = s.find("fill=\"#"); at != std::string::npos; at = s.find("fill=\"#", at + 1)) {
    fills.insert(s.substr(at + 6, 7));
    ++cells;
  }
  CHECK(cells == 8);
  CHECK(fills.size() == 1);
}
