// Command-line driver: train, eval, attack, report, complexity, sweep.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "covert/harness.hpp"
#include "covert/plot.hpp"

namespace fs = std::filesystem;
using namespace covert;

namespace {

struct LoadedRun {
  ExperimentConfig cfg;
  RunRecord record;
  std::unique_ptr<CovertSystem> system;
};

LoadedRun load_run(const fs::path& dir, const std::vector<std::string>& overrides = {}) {
  LoadedRun r;
  r.cfg = ExperimentConfig::from_file(dir / "config.cfg", overrides);
  std::ifstream in(dir / "record.json");
  if (!in) throw std::runtime_error("missing " + (dir / "record.json").string());
  r.record = RunRecord::from_json(nlohmann::json::parse(in));
  r.system = std::make_unique<CovertSystem>(r.cfg);
  r.system->restore(Checkpoint::load(dir / "model.ckpt"));
  return r;
}

void print_log(const LossPoint& p) {
  std::fprintf(stderr, "phase %d cand %2d step %5d tau %.3f | total %.4f p_exp %.4f p_ste %.4f c %.4f sp %.4f cts %.4f\n",
               p.phase, p.candidate, p.step, p.gate_temperature, p.loss.l_total, p.loss.l_p_exp,
               p.loss.l_p_ste, p.loss.l_c_ste, p.loss.l_sparsity, p.loss.l_cts);
}

fs::path train_and_eval(const ExperimentConfig& cfg, const fs::path& out_root, bool do_eval,
                        bool detection, bool quiet) {
  const DatasetSplits data = make_datasets(cfg);
  RunOptions opts;
  opts.output_root = out_root;
  if (!quiet) opts.on_log = print_log;
  TrainedRun run = train(cfg, data, opts);
  const fs::path dir = out_root / cfg.run_name();
  if (do_eval) {
    EvalOptions eo;
    eo.detection = detection;
    eo.output_dir = dir;
    const RunRecord rec = evaluate(run.record, *run.system, cfg, data, cfg.eval.snr_list, eo);
    std::cout << metric_table(rec);
  }
  return dir;
}

std::string cost_row(const std::string& name, const CostReport& c) {
  char buf[256];
  double enc = 0.0;
  for (const auto& [_, v] : c.encoder_flops_by_path) enc += v;
  std::snprintf(buf, sizeof buf, "%-28s %12llu %12llu %16.0f %16.0f\n", name.c_str(),
                static_cast<unsigned long long>(c.param_count),
                static_cast<unsigned long long>(c.encoder_params), enc, c.total_flops);
  return buf;
}

void report(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& out) {
  std::vector<RunRecord> records;
  for (const auto& d : run_dirs) {
    std::ifstream in(d / "record.json");
    if (!in) throw std::runtime_error("missing " + (d / "record.json").string());
    records.push_back(RunRecord::from_json(nlohmann::json::parse(in)));
  }
  std::ostringstream text;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    text << "## " << r.model << " " << r.config_hash << "-s" << r.seed << "\n";
    text << "params " << r.parameter_count << "  total_flops " << r.cost.total_flops << "\n";
    text << metric_table(r) << "\n";
  }
  // Relative improvements of the first run over each other run, per SNR.
  if (records.size() > 1) {
    text << "relative improvement of " << records[0].model << " (%)\n";
    text << "vs\tsnr_db\tmiou_ste\tdelta1\tabs_err\n";
    for (std::size_t i = 1; i < records.size(); ++i) {
      const auto& a = records[0].evaluation;
      const auto& b = records[i].evaluation;
      for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
        char buf[256];
        auto rel = [](double p, double q, Direction d) {
          try {
            return relative_improvement(p, q, d);
          } catch (const std::exception&) {
            return std::nan("");
          }
        };
        std::snprintf(buf, sizeof buf, "%s\t%.1f\t%.2f\t%.2f\t%.2f\n", records[i].model.c_str(),
                      a[k].snr_db,
                      rel(a[k].public_stego.miou, b[k].public_stego.miou, Direction::HigherBetter),
                      rel(a[k].covert.delta1, b[k].covert.delta1, Direction::HigherBetter),
                      rel(a[k].covert.abs_err, b[k].covert.abs_err, Direction::LowerBetter));
        text << buf;
      }
    }
  }
  std::cout << text.str();
  if (!out) return;
  fs::create_directories(*out);
  std::ofstream(*out / "report.txt") << text.str();
  std::vector<Series> acc, miou;
  for (const auto& r : records) {
    Series a{r.model + " s" + std::to_string(r.seed), {}, {}};
    Series m = a;
    for (const auto& e : r.evaluation) {
      m.x.push_back(e.snr_db);
      m.y.push_back(e.public_stego.miou);
      if (e.detection) {
        a.x.push_back(e.snr_db);
        a.y.push_back(e.detection->accuracy);
      }
    }
    if (!a.x.empty()) acc.push_back(a);
    if (!m.x.empty()) miou.push_back(m);
  }
  if (!acc.empty())
    write_line_plot(*out / "attacker_accuracy_vs_snr.svg", "Attacker accuracy", "SNR (dB)",
                    "accuracy", acc);
  if (!miou.empty())
    write_line_plot(*out / "stego_miou_vs_snr.svg", "Stego-path public mIoU", "SNR (dB)", "mIoU",
                    miou);
}

// "key=v1/v2/v3" -> one override per value.
std::vector<std::vector<std::string>> expand_grid(const std::vector<std::string>& axes) {
  std::vector<std::vector<std::string>> combos{{}};
  for (const auto& axis : axes) {
    const auto eq = axis.find('=');
    if (eq == std::string::npos) throw ConfigError("grid axis needs key=v1/v2: " + axis);
    const std::string key = axis.substr(0, eq);
    std::vector<std::string> values;
    std::stringstream ss(axis.substr(eq + 1));
    for (std::string v; std::getline(ss, v, '/');) values.push_back(v);
    std::vector<std::vector<std::string>> next;
    for (const auto& c : combos)
      for (const auto& v : values) {
        auto e = c;
        e.push_back(key + "=" + v);
        next.push_back(e);
      }
    combos = std::move(next);
  }
  return combos;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covert semantic communication experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_root = "runs";
  bool quiet = false;

  auto* train_cmd = app.add_subcommand("train", "Train one model and write its run directory");
  bool train_eval = false;
  train_cmd->add_option("-c,--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("-s,--set", overrides, "key=value override (repeatable)");
  train_cmd->add_option("-o,--out", out_root, "output root");
  train_cmd->add_flag("--eval", train_eval, "evaluate over eval.snr_list afterwards");
  train_cmd->add_flag("-q,--quiet", quiet);

  std::string run_dir;
  std::vector<double> snrs;
  bool no_detection = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained run over an SNR list");
  eval_cmd->add_option("-r,--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--snr", snrs, "SNRs in dB (default: eval.snr_list)")->delimiter(',');
  eval_cmd->add_flag("--no-detection", no_detection);
  eval_cmd->add_option("-s,--set", overrides, "override (e.g. attacker settings)");

  double attack_snr = 6.0;
  auto* attack_cmd = app.add_subcommand("attack", "Train and score the detector at one SNR");
  attack_cmd->add_option("-r,--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  attack_cmd->add_option("--snr", attack_snr, "SNR in dB");
  attack_cmd->add_option("-s,--set", overrides, "override (e.g. attacker.layout=flatten)");

  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "Summarise evaluated runs");
  report_cmd->add_option("runs", report_runs, "run directories")->required();
  report_cmd->add_option("-o,--out", report_out, "directory for report.txt and plots");

  auto* cx_cmd = app.add_subcommand("complexity", "Parameter and FLOP table");
  cx_cmd->add_option("-c,--config", config_path, "config file")->check(CLI::ExistingFile);
  cx_cmd->add_option("-s,--set", overrides, "key=value override");
  cx_cmd->add_option("-r,--run", run_dir, "trained run whose gates to report");

  std::vector<std::string> models, grid;
  std::vector<std::uint64_t> seeds{0};
  int jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate a grid of runs");
  sweep_cmd->add_option("-c,--config", config_path, "base config")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("-s,--set", overrides, "override applied to every run");
  sweep_cmd->add_option("-m,--models", models, "model kinds")->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds, "seeds")->delimiter(',');
  sweep_cmd->add_option("-g,--grid", grid, "axis key=v1/v2/... (repeatable)");
  sweep_cmd->add_option("-o,--out", out_root, "output root");
  sweep_cmd->add_option("-j,--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);
  sweep_cmd->add_flag("-q,--quiet", quiet);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto cfg = ExperimentConfig::from_file(config_path, overrides);
      std::cout << train_and_eval(cfg, out_root, train_eval, true, quiet).string() << "\n";
    } else if (*eval_cmd) {
      LoadedRun run = load_run(run_dir, overrides);
      if (snrs.empty()) snrs = run.cfg.eval.snr_list;
      EvalOptions eo;
      eo.detection = !no_detection;
      eo.output_dir = fs::path(run_dir);
      const RunRecord rec =
          evaluate(run.record, *run.system, run.cfg, make_datasets(run.cfg), snrs, eo);
      std::cout << metric_table(rec);
    } else if (*attack_cmd) {
      LoadedRun run = load_run(run_dir, overrides);
      const DatasetSplits data = make_datasets(run.cfg);
      TrainedAttacker willie;
      const DetectionReport d = attack(*run.system, run.cfg, data.test, attack_snr, &willie);
      Checkpoint ck;
      ck.add_params(willie.net.params());
      ck.save(fs::path(run_dir) / ("attacker_snr" + format_double(attack_snr) + "_" +
                                   to_string(run.cfg.attacker.layout) + ".ckpt"));
      nlohmann::json j = {{"snr_db", attack_snr},
                          {"layout", to_string(run.cfg.attacker.layout)},
                          {"accuracy", d.accuracy},
                          {"confusion", d.confusion},
                          {"heuristic_cosine", d.heuristic_cosine},
                          {"mi_proxy", d.mi_proxy},
                          {"steps_run", willie.steps_run}};
      std::ofstream(fs::path(run_dir) / "attacks.jsonl", std::ios::app) << j.dump() << "\n";
      std::cout << j.dump() << "\n";
    } else if (*report_cmd) {
      std::vector<fs::path> dirs(report_runs.begin(), report_runs.end());
      report(dirs, report_out.empty() ? std::nullopt : std::optional<fs::path>(report_out));
    } else if (*cx_cmd) {
      ExperimentConfig cfg = run_dir.empty() ? (config_path.empty()
                                                    ? ExperimentConfig{}
                                                    : ExperimentConfig::from_file(config_path, overrides))
                                             : ExperimentConfig::from_file(fs::path(run_dir) / "config.cfg", overrides);
      const EncoderConfig enc = cfg.encoder_config();
      const auto pub = cfg.decoder_config(DecoderTask::Public);
      const auto cov = cfg.decoder_config(DecoderTask::Covert);
      const int L = enc.num_blocks();
      std::printf("%-28s %12s %12s %16s %16s\n", "model", "params", "enc_params", "enc_flops",
                  "total_flops");
      std::cout << cost_row("dual encoder (dense)", dual_encoder_cost(enc, pub, cov));
      std::cout << cost_row("shared backbone (dense)",
                            system_cost(enc, GateVector::ones(L), GateVector::ones(L), pub, cov));
      if (!run_dir.empty()) {
        LoadedRun run = load_run(run_dir);
        std::cout << cost_row("learned paths", system_cost(enc, run.system->gates_exp,
                                                           run.system->gates_ste, pub, cov));
      }
      std::printf("\nblock  skippable  flops\n");
      const CostReport dense = system_cost(enc, GateVector::ones(L), GateVector::ones(L), pub, cov);
      for (int l = 0; l < L; ++l)
        std::printf("%5d  %9s  %.0f\n", l + 1, enc.blocks[l].skippable ? "yes" : "no",
                    dense.per_block_flops[l]);
      std::printf("\ndecoder flops per module: configured %.0f, full-scale formula %.0f\n",
                  decoder_cost(enc, pub),
                  reference_decoder_cost(3, 1, enc.blocks.back().out_channels,
                                         enc.block_output_hw().back().first,
                                         enc.block_output_hw().back().second));
    } else if (*sweep_cmd) {
      if (models.empty()) models.push_back("");
      std::vector<ExperimentConfig> cfgs;
      for (const auto& combo : expand_grid(grid))
        for (const auto& m : models)
          for (auto seed : seeds) {
            auto ov = overrides;
            ov.insert(ov.end(), combo.begin(), combo.end());
            if (!m.empty()) ov.push_back("model=" + m);
            ov.push_back("seed=" + std::to_string(seed));
            cfgs.push_back(ExperimentConfig::from_file(config_path, ov));
          }
      std::vector<fs::path> dirs(cfgs.size());
      std::vector<std::string> errors(cfgs.size());
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
      for (std::size_t i = 0; i < cfgs.size(); ++i) {
        try {
          dirs[i] = train_and_eval(cfgs[i], out_root, true, true, quiet || jobs > 1);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
      std::vector<fs::path> done;
      for (std::size_t i = 0; i < cfgs.size(); ++i) {
        if (!errors[i].empty())
          std::cerr << cfgs[i].run_name() << " failed: " << errors[i] << "\n";
        else
          done.push_back(dirs[i]);
      }
      if (!done.empty()) report(done, fs::path(out_root) / "report");
      if (done.size() != cfgs.size()) return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
