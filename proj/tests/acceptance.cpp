// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance                       all criteria, training missing runs
//   acceptance --train-only --fresh  (re)build the run cache and stop
//   acceptance -k 6 -k 7 --no-train  selected criteria from cached runs
//
// Exit status is 0 only when every selected criterion passes.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "covert/harness.hpp"

using namespace covert;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Run cache for the trained criteria.

constexpr double kSnr = 6.0;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};

struct Lab {
  fs::path cache;
  bool may_train = true;

  ExperimentConfig config(ModelKind kind, double lambda_cts, std::uint64_t seed,
                          std::vector<std::string> extra = {}) const {
    std::vector<std::string> o{"model=" + to_string(kind), "loss.lambda_cts=" + format_double(lambda_cts),
                               "seed=" + std::to_string(seed), "eval.snr_list=" + format_double(kSnr)};
    o.insert(o.end(), extra.begin(), extra.end());
    return ExperimentConfig::from_file(fs::path(COVERT_SOURCE_DIR) / "configs" / "desk.cfg", o);
  }

  static RunRecord train_and_evaluate(const ExperimentConfig& cfg, const std::optional<fs::path>& root) {
    const auto data = make_datasets(cfg);
    RunOptions ro;
    ro.output_root = root;
    auto run = train(cfg, data, ro);
    EvalOptions eo;
    if (root) eo.output_dir = *root / cfg.run_name();
    auto rec = evaluate(run.record, *run.system, cfg, data, cfg.eval.snr_list, eo);
    if (root) write_run_outputs(rec, *root / cfg.run_name());
    return rec;
  }

  RunRecord get(const ExperimentConfig& cfg) const {
    const fs::path file = cache / cfg.run_name() / "record.json";
    if (fs::exists(file)) {
      std::ifstream in(file);
      auto rec = RunRecord::from_json(nlohmann::json::parse(in));
      if (!rec.evaluation.empty()) return rec;
    }
    if (!may_train) throw std::runtime_error("no cached run " + cfg.run_name() + " (" + to_string(cfg.model) + ")");
    const auto t0 = std::chrono::steady_clock::now();
    auto rec = train_and_evaluate(cfg, cache);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << fmt("  trained %-28s lambda_cts=%-4s seed=%llu  %.0fs", to_string(cfg.model).c_str(),
                     format_double(cfg.loss.lambda_cts).c_str(),
                     static_cast<unsigned long long>(cfg.seed), s)
              << std::endl;
    return rec;
  }

  std::vector<RunRecord> seeds(ModelKind kind, double lambda_cts) const {
    std::vector<RunRecord> out;
    for (auto s : kSeeds) out.push_back(get(config(kind, lambda_cts, s)));
    return out;
  }

  void build_all() const {
    seeds(ModelKind::StackingBaseline, 1.0);
    for (double l : {0.0, 1.0, 2.0}) seeds(ModelKind::Proposed, l);
    seeds(ModelKind::CosineSimilarityAblation, 1.0);
  }
};

const EvalRow& row(const RunRecord& r) {
  for (const auto& e : r.evaluation)
    if (e.snr_db == kSnr) return e;
  throw std::runtime_error("run has no row at 6 dB");
}

double detect(const RunRecord& r) { return row(r).detection.value().accuracy; }

template <typename F>
double mean_of(const std::vector<RunRecord>& runs, F f) {
  double s = 0.0;
  for (const auto& r : runs) s += f(r);
  return s / runs.size();
}

std::string list(const std::vector<RunRecord>& runs, double (*f)(const RunRecord&)) {
  std::string s;
  for (const auto& r : runs) s += (s.empty() ? "" : ",") + fmt("%.4f", f(r));
  return "[" + s + "]";
}

double abs_err(const RunRecord& r) { return row(r).covert.abs_err; }

// ---------------------------------------------------------------------------
// Closed-form and oracle criteria.

Outcome gumbel_suite() {
  auto one = [](double a0, double a1, double tau) {
    GatePolicy p(1, tau);
    p.set_logit(PathId::Explicit, 0, 0, a0);
    p.set_logit(PathId::Explicit, 0, 1, a1);
    return p;
  };
  Rng rng(101);
  std::uniform_real_distribution<double> logit(-8, 8), noise(-3, 3), temp(0.05, 5);
  double worst_norm = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double a0 = logit(rng), a1 = logit(rng), t = temp(rng);
    const std::array<double, 2> g{noise(rng), noise(rng)}, gs{g[1], g[0]};
    const double on = soft_gate(one(a0, a1, t), 0, PathId::Explicit, g);
    const double off = soft_gate(one(a1, a0, t), 0, PathId::Explicit, gs);
    worst_norm = std::max(worst_norm, std::abs(on + off - 1.0));
  }

  int checked = 0, close = 0;
  std::uniform_real_distribution<double> small(-3, 3);
  while (checked < 10000) {
    const double a0 = small(rng), a1 = small(rng);
    const std::array<std::size_t, 1> shape{2};
    const auto g = sample_gumbel_noise(shape, rng());
    const double gap = (a1 + g[1]) - (a0 + g[0]);
    if (std::abs(gap) <= 0.1) continue;
    ++checked;
    const std::array<double, 2> ga{g[0], g[1]};
    const double u = soft_gate(one(a0, a1, 0.01), 0, PathId::Explicit, ga);
    close += std::abs(u - (gap > 0 ? 1.0 : 0.0)) < 1e-3;
  }

  double worst_fd = 0.0;
  const double h = 1e-5;
  std::uniform_real_distribution<double> lg(-3, 3), nz(-2, 2), tp(0.3, 5);
  for (int i = 0; i < 100; ++i) {
    GatePolicy p = one(lg(rng), lg(rng), tp(rng));
    const std::array<double, 2> g{nz(rng), nz(rng)};
    const auto grad = soft_gate_grad(p, 0, PathId::Explicit, g);
    for (int j = 0; j < 2; ++j) {
      const double base = p.logit(PathId::Explicit, 0, j);
      p.set_logit(PathId::Explicit, 0, j, base + h);
      const double up = soft_gate(p, 0, PathId::Explicit, g);
      p.set_logit(PathId::Explicit, 0, j, base - h);
      const double dn = soft_gate(p, 0, PathId::Explicit, g);
      p.set_logit(PathId::Explicit, 0, j, base);
      const double fd = (up - dn) / (2 * h);
      worst_fd = std::max(worst_fd, std::abs(fd - grad[j]) / std::max(1e-8, std::abs(fd) + std::abs(grad[j])));
    }
  }
  const bool ok = worst_norm <= 1e-9 && close >= 9900 && worst_fd < 1e-4;
  return {ok, fmt("normalisation err %.1e, concentration %d/10000, FD rel err %.1e", worst_norm, close, worst_fd)};
}

double ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

Outcome channel_statistics() {
  Tensor z({1, 1, 1000, 1000});
  Rng rng(202);
  std::normal_distribution<double> n01;
  for (auto& v : z.vec()) v = static_cast<Real>(n01(rng));
  ChannelConfig awgn;
  awgn.snr_db = 2.0;
  const double sigma2 = noise_variance_for_snr(z.vec(), awgn.snr_db);
  const auto rx = transmit(z, awgn, 7);
  double m = 0, s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double e = double(rx.data[i]) - z[i];
    m += e;
    s += e * e;
  }
  m /= z.size();
  const double var_err = std::abs((s / z.size() - m * m) / sigma2 - 1.0);

  ChannelConfig ray;
  ray.family = ChannelFamily::Rayleigh;
  double h2 = 0;
  for (int i = 0; i < 1000000; ++i) {
    const double h = sample_fading_gain(ray, rng);
    h2 += h * h;
  }
  const double ray_err = std::abs(h2 / 1e6 - 1.0);

  ChannelConfig nak;
  nak.family = ChannelFamily::Nakagami;
  std::normal_distribution<double> half(0.0, std::sqrt(0.5));
  std::vector<double> a(100000), b(100000);
  for (int i = 0; i < 100000; ++i) {
    a[i] = sample_fading_gain(nak, rng);
    const double x = half(rng), y = half(rng);
    b[i] = std::hypot(x, y);
  }
  const double d = ks(a, b);
  return {var_err <= 0.02 && ray_err <= 0.02 && d < 0.01,
          fmt("AWGN variance err %.2f%%, Rayleigh E[h^2] err %.2f%%, KS %.4f", 100 * var_err, 100 * ray_err, d)};
}

Outcome loss_closed_forms() {
  double worst_ln = 0.0;
  for (int n : {2, 4, 8}) {
    Tensor same({n, 5, 1, 1}, 0.3f);
    worst_ln = std::max(worst_ln, std::abs(contrastive_loss(same, same, 0.1).value - std::log(double(n))));
  }
  Tensor id({2, 2, 1, 1});
  id[0] = 1;
  id[3] = 1;
  const double two = contrastive_loss(id, id, 1.0).value;
  const double two_err = std::abs(two + std::log(std::numbers::e / (std::numbers::e + 1.0)));

  // Zero exactly when every gate is off and the distributions agree on
  // every block that carries KL weight.
  Rng rng(303);
  const int L = 6;
  int violations = 0;
  std::uniform_real_distribution<double> lg(-2, 2);
  for (int t = 0; t < 3000; ++t) {
    GatePolicy p(L, 1.0);
    const int mode = t % 3;
    const int bump = mode == 2 ? static_cast<int>(rng() % (L - 1)) : -1;
    for (int l = 0; l < L; ++l)
      for (int j = 0; j < 2; ++j) {
        const double v = lg(rng);
        p.set_logit(PathId::Explicit, l, j, v);
        p.set_logit(PathId::Stego, l, j, l == bump && j == 1 ? v + 1.0 : v);
      }
    std::vector<double> ge(L, 0.0), gs(L, 0.0);
    if (mode == 1) (rng() % 2 ? ge : gs)[rng() % L] = 1.0;
    bool differs = false;
    for (int l = 0; l < L - 1; ++l)
      differs |= activation_distribution(p, l, PathId::Explicit) != activation_distribution(p, l, PathId::Stego);
    const bool gates_zero = mode != 1;
    const double v = sparsity_loss_value(p, {ge, GateMode::Hard}, {gs, GateMode::Hard}, 0.01, 0.01);
    violations += (v == 0.0) != (gates_zero && !differs);
  }

  GatePolicy q(2, 1.0);
  q.set_logit(PathId::Stego, 0, 1, std::log(3.0));
  const double kl = sparsity_loss_value(q, {{0, 0}, GateMode::Hard}, {{0, 0}, GateMode::Hard}, 0.0, 1.0);
  const double hand = 0.5 * (0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5));
  const double kl_err = std::abs(kl - hand);
  return {worst_ln <= 1e-6 && two_err <= 1e-6 && violations == 0 && kl_err <= 1e-5,
          fmt("lnN err %.1e, two-pair %.6f (err %.1e), sparsity iff violations %d/3000, KL hand case %.6f (err %.1e)",
              worst_ln, two, two_err, violations, kl, kl_err)};
}

Outcome metric_oracles() {
  Rng rng(404);
  int mismatches = 0, trials = 0;
  while (trials < 1000) {
    std::vector<std::uint8_t> p(9), t(9);
    for (int i = 0; i < 9; ++i) {
      p[i] = rng() % 2;
      t[i] = rng() % 2;
    }
    ++trials;
    double iou = 0.0;
    int present = 0, correct = 0;
    for (int k = 0; k < 2; ++k) {
      int inter = 0, uni = 0;
      for (int i = 0; i < 9; ++i) {
        inter += p[i] == k && t[i] == k;
        uni += p[i] == k || t[i] == k;
      }
      if (uni) {
        iou += double(inter) / uni;
        ++present;
      }
    }
    for (int i = 0; i < 9; ++i) correct += p[i] == t[i];
    const auto s = segmentation_score(p, t, 2);
    mismatches += s.miou != iou / present || s.pixel_acc != correct / 9.0;
  }
  int non_monotone = 0;
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<Real> a(16), b(16);
    for (int j = 0; j < 16; ++j) {
      a[j] = u(rng);
      b[j] = u(rng);
    }
    const auto s = depth_score(a, b);
    non_monotone += !(s.delta1 <= s.delta2 && s.delta2 <= s.delta3);
  }
  return {mismatches == 0 && non_monotone == 0,
          fmt("mIoU/pixel-acc mismatches %d/1000, delta non-monotone %d/1000", mismatches, non_monotone)};
}

Outcome complexity(const Lab& lab) {
  const bool unit = block_cost(BlockSpec{0, 1, 1, 1, 1, true}, 1, 1) == 2.0;
  const double big = block_cost(BlockSpec{0, 64, 64, 3, 1, true}, 32, 32);
  const auto cfg = lab.config(ModelKind::Proposed, 1.0, 0);
  const auto enc = cfg.encoder_config();
  const auto pub = cfg.decoder_config(DecoderTask::Public), cov = cfg.decoder_config(DecoderTask::Covert);
  const auto dual = dual_encoder_cost(enc, pub, cov);
  const auto shared = system_cost(enc, GateVector::ones(enc.num_blocks()), GateVector::ones(enc.num_blocks()), pub, cov);
  const double ratio = double(shared.encoder_params) / double(dual.encoder_params);

  // Learned architectures against the dense dual-encoder system.
  std::string flops;
  bool below = true;
  for (const auto& r : lab.seeds(ModelKind::Proposed, 1.0)) {
    const double f = system_cost(enc, GateVector{r.gates_explicit, GateMode::Hard},
                                 GateVector{r.gates_stego, GateMode::Hard}, pub, cov).total_flops;
    below &= f < dual.total_flops;
    flops += fmt("%s%.3g", flops.empty() ? "" : ",", f);
  }
  const bool ok = unit && big == 75497472.0 && ratio == 0.5 && below;
  return {ok, fmt("unit case %s, K3/64/64/32x32 = %.0f, encoder param ratio %.6f, gated FLOPs [%s] vs dense dual %.3g",
                  unit ? "2" : "wrong", big, ratio, flops.c_str(), dual.total_flops)};
}

// ---------------------------------------------------------------------------
// Trained criteria.

Outcome security_gap(const Lab& lab) {
  const auto stack = lab.seeds(ModelKind::StackingBaseline, 1.0);
  const auto prop = lab.seeds(ModelKind::Proposed, 1.0);
  const double s = mean_of(stack, detect), p = mean_of(prop, detect);
  return {s >= 0.95 && p <= 0.65 && s - p >= 0.30,
          fmt("attacker accuracy stacking %.4f %s, proposed %.4f %s, gap %.1f pp", s, list(stack, detect).c_str(), p,
              list(prop, detect).c_str(), 100 * (s - p))};
}

Outcome lambda_ablation(const Lab& lab) {
  std::vector<double> acc, err;
  std::string detail;
  for (double l : {0.0, 1.0, 2.0}) {
    const auto runs = lab.seeds(ModelKind::Proposed, l);
    acc.push_back(mean_of(runs, detect));
    err.push_back(mean_of(runs, abs_err));
    detail += fmt("%slambda_cts=%g: acc %.4f %s, abs err %.4f %s", detail.empty() ? "" : "; ", l, acc.back(),
                  list(runs, detect).c_str(), err.back(), list(runs, abs_err).c_str());
  }
  const bool acc_down = acc[0] > acc[1] && acc[1] > acc[2];
  const bool err_up = err[0] < err[1] && err[1] < err[2];
  return {acc_down && err_up,
          detail + fmt("; accuracy decreasing: %s, abs err increasing: %s", acc_down ? "yes" : "no",
                       err_up ? "yes" : "no")};
}

Outcome cosine_ablation(const Lab& lab) {
  const auto cos = lab.seeds(ModelKind::CosineSimilarityAblation, 1.0);
  const auto prop = lab.seeds(ModelKind::Proposed, 1.0);
  const double c = mean_of(cos, detect), p = mean_of(prop, detect);
  return {c - p >= 0.20, fmt("attacker accuracy cosine ablation %.4f %s, proposed %.4f, difference %.1f pp", c,
                             list(cos, detect).c_str(), p, 100 * (c - p))};
}

Outcome utility(const Lab& lab) {
  bool ok = true;
  std::string d;
  for (const auto& r : lab.seeds(ModelKind::Proposed, 1.0)) {
    const double e = row(r).public_explicit.miou, s = row(r).public_stego.miou;
    ok &= s >= 0.9 * e;
    d += fmt("%sseed %llu: stego %.4f / explicit %.4f = %.3f", d.empty() ? "" : "; ",
             static_cast<unsigned long long>(r.seed), s, e, s / e);
  }
  return {ok, d};
}

Outcome reproducibility(const Lab& lab) {
  // Two fresh runs of the full pipeline on a shortened schedule.
  const auto cfg = lab.config(ModelKind::Proposed, 1.0, 7,
                              {"train.warmup_steps=40", "train.policy_steps=80", "train.retrain_steps=40",
                               "attacker.train_steps=200", "eval.snr_list=0,6"});
  const auto a = Lab::train_and_evaluate(cfg, std::nullopt);
  const auto b = Lab::train_and_evaluate(cfg, std::nullopt);
  const std::string ta = metric_table(a), tb = metric_table(b);
  const auto rows = std::count(ta.begin(), ta.end(), '\n');
  return {ta == tb && !ta.empty(), fmt("metric tables (%ld lines) %s", static_cast<long>(rows),
                                       ta == tb ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> selected;
  std::string cache = "acceptance_runs";
  bool train_only = false, fresh = false, no_train = false;
  app.add_option("-k,--criterion", selected, "criterion numbers (default: all)");
  app.add_option("--cache", cache, "directory of cached training runs");
  app.add_flag("--train-only", train_only, "build the run cache and exit");
  app.add_flag("--fresh", fresh, "discard cached runs first");
  app.add_flag("--no-train", no_train, "fail instead of training missing runs");
  CLI11_PARSE(app, argc, argv);

  Lab lab{cache, !no_train};
  if (fresh) fs::remove_all(lab.cache);
  fs::create_directories(lab.cache);

  if (train_only) {
    const auto t0 = std::chrono::steady_clock::now();
    lab.build_all();
    std::cout << fmt("run cache ready in %.1f min",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60)
              << std::endl;
    return 0;
  }

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"Gumbel-Softmax gates", gumbel_suite}},
      {2, {"channel statistics", channel_statistics}},
      {3, {"loss closed forms", loss_closed_forms}},
      {4, {"metric oracles", metric_oracles}},
      {5, {"complexity accounting", [&] { return complexity(lab); }}},
      {6, {"security gap at 6 dB", [&] { return security_gap(lab); }}},
      {7, {"lambda_cts ablation ordering", [&] { return lambda_ablation(lab); }}},
      {8, {"cosine-similarity ablation", [&] { return cosine_ablation(lab); }}},
      {9, {"public utility on the Stego path", [&] { return utility(lab); }}},
      {10, {"reproducibility", [&] { return reproducibility(lab); }}},
  };
  if (selected.empty())
    for (const auto& [k, _] : criteria) selected.push_back(k);

  int failed = 0;
  for (int k : selected) {
    auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << k << "\n";
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << fmt("criterion %2d %s  %s (%.1fs): ", k, o.pass ? "PASS" : "FAIL", it->second.first.c_str(), s)
              << o.detail << std::endl;
  }
  std::cout << fmt("%zu criteria checked, %d failed", selected.size(), failed) << std::endl;
  return failed == 0 ? 0 : 1;
}
