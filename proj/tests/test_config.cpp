#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "meb/common.hpp"
#include "meb/config.hpp"
#include "meb/runner.hpp"

using meb::Error;
using namespace meb::cfg;

namespace {

// Expects parse failure and checks the message carries every fragment
// (origin:line prefix, key name, section).
void check_parse_error(const std::string& text,
                       const std::vector<std::string>& fragments) {
  try {
    parse_config(text, "test.cfg");
    FAIL_CHECK("expected parse error for:\n" << text);
  } catch (const Error& e) {
    const std::string msg = e.what();
    for (const auto& f : fragments) {
      INFO("message: " << msg);
      CHECK(msg.find(f) != std::string::npos);
    }
  }
}

}  // namespace

TEST_CASE("defaults describe the desk-scale experiment") {
  const ExperimentConfig c = default_config();
  CHECK(c.seed == 1);
  CHECK(c.out == "runs/exp");
  CHECK(c.feature_dim == 64);
  REQUIRE(c.experts.size() == 3);
  CHECK(c.experts[0].name == "dense-mlp");
  CHECK(c.experts[1].name == "res-mlp");
  CHECK(c.experts[2].name == "incept-mlp");
  for (const auto& s : c.experts) CHECK(s.feature_dim == 64);

  CHECK(c.generator.num_identities == 50);
  CHECK(c.generator.input_dim == 32);
  CHECK(c.generator.camera_jitter_sd == doctest::Approx(0.8));
  CHECK(c.shift.apply);
  CHECK(c.shift.min_scale == doctest::Approx(0.4));
  CHECK(c.shift.max_scale == doctest::Approx(2.2));

  CHECK(c.pretrain.epochs == 6);
  CHECK(c.pretrain.lr_milestones == std::vector<int>{5});
  CHECK(c.pretrain.lr == doctest::Approx(0.00035));

  CHECK(c.adapt.epochs == 25);
  CHECK(c.adapt.iterations_per_epoch == 50);
  CHECK(c.adapt.alpha == doctest::Approx(0.98));
  CHECK(c.adapt.m_t == 20);
  CHECK_FALSE(c.adapt.no_ema);

  CHECK(c.generator.seed == c.seed);
  CHECK(c.pretrain.seed == c.seed);
  CHECK(c.adapt.seed == c.seed);
}

TEST_CASE("sectioned text lands in every block") {
  const std::string text = R"(
seed = 9
out = runs/custom

[generator]
num_identities = 12
input_dim = 16
camera_jitter_sd = 0.5
apply_shift = false

[experts]
feature_dim = 24

[pretrain]
epochs = 3
lr_milestones = 1 2
lr = 0.001

[adapt]
epochs = 4
alpha = 0.9
m_t = 5
)";
  const ExperimentConfig c = parse_config(text, "test.cfg");
  CHECK(c.seed == 9);
  CHECK(c.out == "runs/custom");
  CHECK(c.generator.num_identities == 12);
  CHECK(c.generator.input_dim == 16);
  CHECK(c.generator.camera_jitter_sd == doctest::Approx(0.5));
  CHECK_FALSE(c.shift.apply);
  CHECK(c.feature_dim == 24);
  REQUIRE(c.experts.size() == 3);  // stock trio, resized features
  for (const auto& s : c.experts) CHECK(s.feature_dim == 24);
  CHECK(c.pretrain.epochs == 3);
  CHECK(c.pretrain.lr_milestones == std::vector<int>{1, 2});
  CHECK(c.pretrain.lr == doctest::Approx(0.001));
  CHECK(c.adapt.epochs == 4);
  CHECK(c.adapt.alpha == doctest::Approx(0.9));
  CHECK(c.adapt.m_t == 5);
  // untouched keys keep their defaults
  CHECK(c.adapt.iterations_per_epoch == 50);
  CHECK(c.generator.cameras_per_domain == 4);
  // the seed reaches every stage
  CHECK(c.generator.seed == 9);
  CHECK(c.pretrain.seed == 9);
  CHECK(c.adapt.seed == 9);
}

TEST_CASE("expert sections replace the stock trio") {
  const std::string text = R"(
[experts]
feature_dim = 16

[expert tiny-a]
widths = 8 8
activations = relu tanh
skip = residual

[expert tiny-b]
widths = 12
activations = relu
skip = none
feature_dim = 20
)";
  const ExperimentConfig c = parse_config(text, "test.cfg");
  REQUIRE(c.experts.size() == 2);
  CHECK(c.experts[0].name == "tiny-a");
  CHECK(c.experts[0].widths == std::vector<int>{8, 8});
  REQUIRE(c.experts[0].activations.size() == 2);
  CHECK(c.experts[0].activations[1] == meb::model::Activation::kTanh);
  CHECK(c.experts[0].skip == meb::model::SkipPattern::kResidual);
  CHECK(c.experts[0].feature_dim == 16);  // filled from [experts]
  CHECK(c.experts[1].name == "tiny-b");
  CHECK(c.experts[1].feature_dim == 20);  // its own override wins
}

TEST_CASE("comments and blank lines are ignored") {
  const std::string text =
      "# leading comment\n"
      "seed = 3  # trailing comment\n"
      "\n"
      "[generator] # section comment\n"
      "num_identities = 7\n";
  const ExperimentConfig c = parse_config(text, "test.cfg");
  CHECK(c.seed == 3);
  CHECK(c.generator.num_identities == 7);
}

TEST_CASE("a hash inside a value only starts a comment after whitespace") {
  const ExperimentConfig c = parse_config("out = runs/a#b\n", "test.cfg");
  CHECK(c.out == "runs/a#b");
}

TEST_CASE("unknown keys are rejected with key and line") {
  check_parse_error("seed = 1\nbogus = 2\n",
                    {"test.cfg:2", "unknown key 'bogus'", "top level"});
  check_parse_error("[generator]\ntypo = 1\n",
                    {"test.cfg:2", "unknown key 'typo'", "[generator]"});
  check_parse_error("[pretrain]\nmomentum = 0.9\n",
                    {"test.cfg:2", "unknown key 'momentum'", "[pretrain]"});
  check_parse_error("[adapt]\nwarmup = 1\n",
                    {"test.cfg:2", "unknown key 'warmup'", "[adapt]"});
  check_parse_error("[expert x]\nlayers = 2\n",
                    {"test.cfg:2", "unknown key 'layers'", "[expert x]"});
  check_parse_error("[nonsense]\n", {"test.cfg:1", "unknown section [nonsense]"});
}

TEST_CASE("duplicate keys and expert sections are rejected") {
  check_parse_error("seed = 1\nseed = 2\n",
                    {"test.cfg:2", "duplicate key 'seed'"});
  check_parse_error("[pretrain]\nepochs = 1\nepochs = 2\n",
                    {"test.cfg:3", "duplicate key 'epochs'", "[pretrain]"});
  check_parse_error("[expert a]\nwidths = 4\n[expert a]\n",
                    {"test.cfg:3", "duplicate expert section 'a'"});
}

TEST_CASE("malformed values name the key") {
  check_parse_error("seed = banana\n", {"key 'seed'", "banana"});
  check_parse_error("[generator]\nnoise_sd = lots\n", {"key 'noise_sd'", "lots"});
  check_parse_error("[generator]\napply_shift = yes\n",
                    {"key 'apply_shift'", "expected true or false"});
  check_parse_error("[pretrain]\nepochs = 2.5\n", {"key 'epochs'", "2.5"});
  check_parse_error("[expert e]\nactivations = relu swish\n",
                    {"key 'activations'", "swish"});
  check_parse_error("[expert e]\nskip = highway\n", {"key 'skip'", "highway"});
}

TEST_CASE("structural errors carry the offending line") {
  check_parse_error("[generator\n", {"test.cfg:1", "unterminated section header"});
  check_parse_error("seed\n", {"test.cfg:1", "expected key = value"});
  check_parse_error("[expert ]\n", {"test.cfg:1", "expert section needs a name"});
}

TEST_CASE("resolved text reparses to the identical configuration") {
  ExperimentConfig c = default_config();
  c.seed = 42;
  c.out = "runs/roundtrip";
  c.generator.num_identities = 17;
  c.shift.apply = false;
  c.pretrain.lr = 0.000125;
  c.adapt.alpha = 0.975;
  set_ablation(c.adapt, "no_mid");
  // propagate the seed the way parsing would
  c.generator.seed = c.pretrain.seed = c.adapt.seed = c.seed;

  const std::string text = resolved_text(c);
  const ExperimentConfig back = parse_config(text, "resolved.cfg");
  CHECK(resolved_text(back) == text);
  CHECK(back.seed == 42);
  CHECK_FALSE(back.shift.apply);
  CHECK(back.pretrain.lr == 0.000125);  // to_chars/from_chars exact round-trip
  CHECK(back.adapt.alpha == 0.975);
  CHECK(back.adapt.no_mid);
}

TEST_CASE("json mirror accepts the same schema") {
  const std::string ini = R"(
seed = 5
out = runs/j

[generator]
num_identities = 11
apply_shift = false

[experts]
feature_dim = 24

[expert solo-a]
widths = 8
activations = relu
skip = none

[expert solo-b]
widths = 6 6
activations = tanh relu
skip = dense-concat

[pretrain]
epochs = 2

[adapt]
epochs = 3
no_ema = true
)";
  const std::string jsn = R"({
  "seed": 5,
  "out": "runs/j",
  "generator": {"num_identities": 11, "apply_shift": false},
  "experts": {
    "feature_dim": 24,
    "specs": [
      {"name": "solo-a", "widths": [8], "activations": ["relu"], "skip": "none"},
      {"name": "solo-b", "widths": [6, 6], "activations": ["tanh", "relu"],
       "skip": "dense-concat"}
    ]
  },
  "pretrain": {"epochs": 2},
  "adapt": {"epochs": 3, "no_ema": true}
})";
  const ExperimentConfig a = parse_config(ini, "a.cfg");
  const ExperimentConfig b = parse_config(jsn, "b.json");
  CHECK(resolved_text(a) == resolved_text(b));
}

TEST_CASE("json unknown keys are rejected with their line") {
  check_parse_error("{\n  \"seed\": 1,\n  \"bogus\": 2\n}\n",
                    {"test.cfg:3", "unknown key 'bogus'"});
  check_parse_error("{\"adapt\": {\"warmup\": 1}}",
                    {"unknown key 'warmup'", "\"adapt\""});
}

TEST_CASE("load_config reads files and names them in errors") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "meb_config_test";
  fs::create_directories(dir);
  const fs::path path = dir / "exp.cfg";
  {
    std::ofstream out(path);
    out << "seed = 77\n";
  }
  const ExperimentConfig c = load_config(path.string());
  CHECK(c.seed == 77);
  CHECK_THROWS_WITH_AS(load_config((dir / "missing.cfg").string()),
                       doctest::Contains("missing.cfg"), Error);
  fs::remove_all(dir);
}

TEST_CASE("resolved generator materializes the shift deterministically") {
  ExperimentConfig c = default_config();
  c.seed = 13;
  const auto g1 = resolved_generator(c);
  const auto g2 = resolved_generator(c);
  CHECK(g1.seed == 13);
  const int d = c.generator.input_dim;
  REQUIRE(static_cast<int>(g1.domain_shift.matrix.size()) == d * d);
  REQUIRE(static_cast<int>(g1.domain_shift.offset.size()) == d);
  CHECK(g1.domain_shift.matrix == g2.domain_shift.matrix);
  CHECK(g1.domain_shift.offset == g2.domain_shift.offset);

  c.seed = 14;
  const auto g3 = resolved_generator(c);
  CHECK(g1.domain_shift.matrix != g3.domain_shift.matrix);

  c.shift.apply = false;
  const auto g4 = resolved_generator(c);
  CHECK(g4.domain_shift.matrix.empty());
  CHECK(g4.domain_shift.offset.empty());
}

TEST_CASE("ablation names round-trip through the flags") {
  meb::train::AdaptConfig a;
  CHECK(ablation_name(a) == "full");
  for (const auto& name : ablation_names()) {
    meb::train::AdaptConfig flags;
    set_ablation(flags, name);
    CHECK(ablation_name(flags) == name);
    set_ablation(flags, "full");
    CHECK(ablation_name(flags) == "full");
  }
  meb::train::AdaptConfig multi;
  set_ablation(multi, "no_mid");
  set_ablation(multi, "no_mtri");
  CHECK(ablation_name(multi) == "no_mid+no_mtri");
  CHECK_THROWS_WITH_AS(set_ablation(multi, "no_such"),
                       doctest::Contains("unknown ablation 'no_such'"), Error);
}

TEST_CASE("median handles odd, even, and single counts") {
  CHECK(meb::run::median({3.0}) == 3.0);
  CHECK(meb::run::median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(meb::run::median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
}

TEST_CASE("metrics fields carry map, available cmc ranks, and skips") {
  meb::eval::MetricsReport r;
  r.map = 0.5;
  r.cmc = {0.4, 0.5, 0.6, 0.7, 0.8};
  r.skipped_queries = 2;
  const auto j = meb::run::metrics_fields(r);
  CHECK(j.at("map").get<double>() == 0.5);
  CHECK(j.at("cmc1").get<double>() == 0.4);
  CHECK(j.at("cmc5").get<double>() == 0.8);
  CHECK_FALSE(j.contains("cmc10"));  // only five ranks evaluated
  CHECK(j.at("skipped_queries").get<int>() == 2);
}
