#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "covert/harness.hpp"
#include "covert/plot.hpp"
#include "grad_check.hpp"

using namespace covert;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const std::string& file, const std::string& text) const { std::ofstream(path / file) << text; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("includes resolve relative to the including file and later keys win") {
  TempDir t("covert_cfg_include");
  fs::create_directories(t.path / "base");
  t.write("base/a.cfg", "# base\nx = 1\ny = 2\n");
  t.write("b.cfg", "include base/a.cfg\ny = 3   # override\nz = hello world\n");
  const auto kv = KeyValueConfig::from_file(t.path / "b.cfg");
  CHECK(kv.get("x") == "1");
  CHECK(kv.get("y") == "3");
  CHECK(kv.get("z") == "hello world");
  auto o = kv;
  o.apply_overrides({"x=5", "w = 7"});
  CHECK(o.get("x") == "5");
  CHECK(o.get("w") == "7");
  CHECK_THROWS_AS(o.apply_overrides({"novalue"}), ConfigError);
}

TEST_CASE("include cycles and missing files are errors") {
  TempDir t("covert_cfg_cycle");
  t.write("a.cfg", "include b.cfg\n");
  t.write("b.cfg", "include a.cfg\n");
  CHECK_THROWS_AS(KeyValueConfig::from_file(t.path / "a.cfg"), ConfigError);
  CHECK_THROWS(KeyValueConfig::from_file(t.path / "missing.cfg"));
}

TEST_CASE("typed parsing") {
  CHECK(parse_double("k", "inf") == std::numeric_limits<double>::infinity());
  CHECK(parse_int_list("k", "1, 2,3") == std::vector<int>{1, 2, 3});
  CHECK(parse_bool("k", "true"));
  CHECK_FALSE(parse_bool("k", "false"));
  CHECK_THROWS_AS(parse_int("k", "12x"), ConfigError);
  CHECK_THROWS_AS(parse_double("k", ""), ConfigError);
  CHECK(parse_double("k", format_double(0.1)) == 0.1);
}

TEST_CASE("experiment config rejects unknown keys and round-trips") {
  KeyValueConfig kv;
  kv.set("train.polcy_steps", "3");
  CHECK_THROWS_AS(ExperimentConfig::from_kv(kv), ConfigError);

  const auto cfg = ExperimentConfig::from_file(fs::path(COVERT_SOURCE_DIR) / "configs/desk.cfg",
                                               {"loss.lambda_cts=0.25", "model=stacking_baseline"});
  CHECK(cfg.loss.lambda_cts == 0.25);
  CHECK(cfg.model == ModelKind::StackingBaseline);
  CHECK(cfg.data.height == 32);
  const auto back = ExperimentConfig::from_kv(cfg.to_kv());
  CHECK(back.to_kv().canonical() == cfg.to_kv().canonical());
  CHECK(back.hash() == cfg.hash());
}

TEST_CASE("config hash ignores the seed and tracks every other value") {
  ExperimentConfig a;
  ExperimentConfig b = a;
  b.seed = 99;
  CHECK(a.hash() == b.hash());
  CHECK(a.run_name() != b.run_name());
  CHECK(b.run_name() == a.hash() + "-s99");
  b.loss.beta = 0.02;
  CHECK(a.hash() != b.hash());
  CHECK(a.hash().size() == 16);
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
}

TEST_CASE("invalid experiment values are rejected") {
  ExperimentConfig c;
  c.train.num_sampled_architectures = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.decoder_dilations = {1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip") {
  TempDir t("covert_ckpt");
  Checkpoint ck;
  const Tensor a = testutil::random_tensor({2, 3, 4, 5}, 1);
  const std::vector<double> v{1.5, -2.25, 1e-300};
  ck.add("layer.weight", a);
  ck.add("policy.logits", v);
  ck.save(t.path / "m.ckpt");
  const auto r = Checkpoint::load(t.path / "m.ckpt");
  REQUIRE(r.arrays().size() == 2);
  CHECK(r.get("policy.logits").data == v);
  Tensor b(a.shape());
  r.load_into("layer.weight", b);
  CHECK(b.vec() == a.vec());
  Tensor wrong({1, 1, 1, 1});
  CHECK_THROWS(r.load_into("layer.weight", wrong));
  CHECK_FALSE(r.has("missing"));
  CHECK_THROWS(r.get("missing"));
  t.write("junk.ckpt", "nope");
  CHECK_THROWS(Checkpoint::load(t.path / "junk.ckpt"));
}

TEST_CASE("system checkpoint restores every tensor") {
  ExperimentConfig cfg;
  cfg.data.height = cfg.data.width = 16;
  cfg.stage_channels = {4, 8};
  cfg.stage_strides = {1, 2};
  cfg.decoder_hidden = 8;
  CovertSystem a(cfg);
  cfg.seed = 5;
  CovertSystem b(cfg);
  a.policy.set_logit(PathId::Stego, 1, 1, 0.75);
  b.restore(a.checkpoint());
  const auto pa = a.weight_params(), pb = b.weight_params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.vec() == pb[i]->value.vec());
  CHECK(b.policy.logit(PathId::Stego, 1, 1) == 0.75);
}

TEST_CASE("plots are written as SVG") {
  TempDir t("covert_plots");
  write_line_plot(t.path / "l.svg", "loss", "step", "value", {{"a", {0, 1, 2}, {3, 1, 2}}});
  write_heatmap(t.path / "h.svg", "policy", {"Explicit", "Stego"}, {"1", "2"}, {{0.1, 0.9}, {0.5, 0.5}});
  for (auto f : {"l.svg", "h.svg"}) {
    const auto s = slurp(t.path / f);
    CHECK(s.find("<svg") != std::string::npos);
    CHECK(s.find("</svg>") != std::string::npos);
  }
}
