#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "meb/common.hpp"
#include "meb/config.hpp"
#include "meb/runner.hpp"

using meb::Error;
using namespace meb::cfg;
using namespace meb::run;

namespace fs = std::filesystem;

namespace {

// A micro experiment that runs every stage in a couple of seconds.
ExperimentConfig micro_config(const std::string& out) {
  const std::string text = R"(
seed = 5

[generator]
num_identities = 10
cameras_per_domain = 3
samples_per_identity = 8
query_per_identity = 2
gallery_per_identity = 3
input_dim = 8
camera_jitter_sd = 0.4
noise_sd = 0.2

[experts]
feature_dim = 12

[expert micro-a]
widths = 16
activations = relu
skip = none

[expert micro-b]
widths = 12 12
activations = tanh relu
skip = residual

[pretrain]
epochs = 2
lr_milestones =
p = 4
k = 2
eval_ranks = 5

[adapt]
epochs = 2
iterations_per_epoch = 5
alpha = 0.9
m_t = 4
p = 3
k = 2
cluster_iters = 10
eval_ranks = 5
)";
  ExperimentConfig c = parse_config(text, "micro.cfg");
  c.out = out;
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<nlohmann::json> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  }
  return rows;
}

}  // namespace

TEST_CASE("the drivers run every stage and write the documented layout") {
  TempDir tmp("meb_runner_stage_test");
  const ExperimentConfig cfg = micro_config(tmp.str());
  std::ostringstream log;

  const GenResult gen = cmd_gen(cfg, log);
  CHECK(fs::exists(gen.source_path));
  CHECK(fs::exists(gen.target_path));
  CHECK(fs::exists(tmp.path / "config.resolved.cfg"));
  CHECK(fs::exists(tmp.path / "manifest.json"));

  RunOptions ropts;
  const PretrainRun pre = cmd_pretrain(cfg, ropts, log);
  CHECK(pre.experts.size() == 2);
  const fs::path pdir = tmp.path / "pretrain";
  CHECK(fs::exists(pdir / "metrics.jsonl"));
  CHECK(fs::exists(pdir / "curve.csv"));
  CHECK(fs::exists(pdir / "summary.json"));
  for (const char* stem : {"micro-a", "micro-b"}) {
    CHECK(fs::exists(pdir / "checkpoints" / "final" / (std::string(stem) + ".json")));
    CHECK(fs::exists(pdir / "checkpoints" / "final" / (std::string(stem) + ".bin")));
  }
  // one line per expert per epoch, stage-tagged
  const auto pre_rows = read_jsonl((pdir / "metrics.jsonl").string());
  CHECK(pre_rows.size() == 4);
  for (const auto& row : pre_rows) {
    CHECK(row.at("stage") == "pretrain");
    CHECK(row.contains("map"));
    CHECK(row.contains("total"));
  }

  const AdaptRun ad = cmd_adapt(cfg, ropts, log);
  CHECK(ad.result.epochs.size() == 2);
  const fs::path adir = tmp.path / "adapt";
  CHECK(fs::exists(adir / "metrics.jsonl"));
  CHECK(fs::exists(adir / "curve.csv"));
  CHECK(fs::exists(adir / "summary.json"));
  const auto ad_rows = read_jsonl((adir / "metrics.jsonl").string());
  // per epoch: one line per expert plus the ensemble line
  CHECK(ad_rows.size() == 2 * (2 + 1));
  std::set<std::string> experts_seen;
  for (const auto& row : ad_rows) {
    CHECK(row.at("stage") == "adapt");
    experts_seen.insert(row.at("expert").get<std::string>());
  }
  CHECK(experts_seen == std::set<std::string>{"ensemble", "micro-a", "micro-b"});

  const EvalRun ev = cmd_eval(cfg, {}, ropts, log);
  CHECK(ev.experts.size() == 2);
  CHECK(fs::exists(tmp.path / "eval" / "summary.json"));

  // evaluating explicit adapted checkpoints works too
  std::vector<std::string> stems;
  for (const char* stem : {"micro-a", "micro-b"}) {
    stems.push_back((adir / "checkpoints" / "final" / stem).string());
  }
  const EvalRun ev2 = cmd_eval(cfg, stems, ropts, log);
  CHECK(ev2.experts.size() == 2);
}

TEST_CASE("adapt ablation runs write their own stage directory") {
  TempDir tmp("meb_runner_ablation_test");
  ExperimentConfig cfg = micro_config(tmp.str());
  std::ostringstream log;
  cmd_gen(cfg, log);
  RunOptions ropts;
  cmd_pretrain(cfg, ropts, log);

  set_ablation(cfg.adapt, "voting_only");
  const AdaptRun run = cmd_adapt(cfg, ropts, log);
  CHECK(fs::exists(tmp.path / "adapt_voting_only" / "metrics.jsonl"));
  for (const auto& ep : run.result.epochs) {
    for (const auto& ex : ep.experts) {
      CHECK(ex.mid == 0.0);
      CHECK(ex.mtri == 0.0);
    }
  }
}

TEST_CASE("checkpoints that do not match the config are refused") {
  TempDir tmp("meb_runner_mismatch_test");
  ExperimentConfig cfg = micro_config(tmp.str());
  std::ostringstream log;
  cmd_gen(cfg, log);
  RunOptions ropts;
  cmd_pretrain(cfg, ropts, log);

  cfg.experts[0].widths = {24};  // drift the config away from the checkpoint
  CHECK_THROWS_WITH_AS(cmd_adapt(cfg, ropts, log),
                       doctest::Contains("does not match the config"), Error);
}

TEST_CASE("reruns with the same config and seed are byte-identical") {
  TempDir a("meb_runner_rerun_a");
  TempDir b("meb_runner_rerun_b");
  std::ostringstream log;
  for (const TempDir* tmp : {&a, &b}) {
    const ExperimentConfig cfg = micro_config(tmp->str());
    RunOptions ropts;
    cmd_gen(cfg, log);
    cmd_pretrain(cfg, ropts, log);
    cmd_adapt(cfg, ropts, log);
  }
  for (const char* rel :
       {"source.csv", "target.csv", "pretrain/metrics.jsonl", "pretrain/curve.csv",
        "adapt/metrics.jsonl", "adapt/curve.csv", "adapt/summary.json"}) {
    CHECK(read_text_file((a.path / rel).string()) ==
          read_text_file((b.path / rel).string()));
  }
}
