#pragma once

// Experiment drivers behind the command-line front-end: dataset
// generation, the two training stages, checkpoint evaluation, and the
// variant sweep. Every driver writes its artifacts (resolved config,
// manifest, metrics.jsonl, curve.csv, checkpoints, summary.json) under a
// run directory and also returns the in-memory results so tests can
// assert on them directly. Nothing here writes timestamps: reruns with
// the same config and seed produce byte-identical files.

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "meb/config.hpp"
#include "meb/dataset.hpp"
#include "meb/eval.hpp"
#include "meb/experts.hpp"
#include "meb/trainloop.hpp"

namespace meb::run {

std::string version_string();

void ensure_dir(const std::string& dir);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// Median of the values (mean of the middle two for even counts).
double median(std::vector<double> v);

// The retrieval numbers every metrics line carries: mAP and CMC at ranks
// 1, 5, and 10 (those present within eval_ranks), plus skipped queries.
nlohmann::ordered_json metrics_fields(const eval::MetricsReport& r);

struct RunOptions {
  std::string data_dir;      // holds source.csv/target.csv; empty = cfg.out
  std::string out_dir;       // stage artifacts root; empty = cfg.out
  std::string pretrain_dir;  // pretrained checkpoints; empty = out_dir + "/pretrain"
  bool per_epoch_checkpoints = true;
  bool dump_clusters = false;
};

struct GenResult {
  std::string source_path;
  std::string target_path;
};

// Writes the benchmark pair plus the resolved config and manifest.
GenResult cmd_gen(const cfg::ExperimentConfig& cfg, std::ostream& log);

struct PretrainRun {
  train::PretrainResult result;
  std::vector<model::ExpertModel> experts;
  std::string dir;  // stage directory with metrics.jsonl etc.
};

// Builds experts from the config and trains them on <data>/source.csv.
PretrainRun cmd_pretrain(const cfg::ExperimentConfig& cfg, const RunOptions& opts,
                         std::ostream& log);

struct AdaptRun {
  train::AdaptResult result;
  std::vector<model::ExpertModel> experts;
  std::string dir;
};

// Loads the pretrained checkpoints, verifies they match the config, and
// co-adapts them on <data>/target.csv. The stage directory is "adapt"
// with the ablation name appended when one is set.
AdaptRun cmd_adapt(const cfg::ExperimentConfig& cfg, const RunOptions& opts,
                   std::ostream& log);

struct EvalRun {
  std::vector<eval::MetricsReport> experts;
  eval::MetricsReport ensemble;
  std::string dir;
};

// Evaluates checkpoints against the target split. Empty stems default to
// the pretrained checkpoints, which makes this the direct-transfer
// measurement.
EvalRun cmd_eval(const cfg::ExperimentConfig& cfg, std::vector<std::string> stems,
                 const RunOptions& opts, std::ostream& log);

struct SweepOptions {
  int seeds = 3;     // consecutive seeds starting at cfg.seed
  int parallel = 1;  // worker threads; runs are independent either way
};

// One table row per seed series. Headline rows ("full", "direct_transfer",
// ...) carry the mean over experts of single-model mAP; ":ensemble" and
// ":<expert>" rows carry the averaged-feature ensemble and the individual
// experts.
struct SweepRow {
  std::string variant;
  std::vector<double> maps;   // final mAP per seed
  std::vector<double> cmc1s;  // final CMC@1 per seed
  double map_median = 0.0;
  double cmc1_median = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string table_path;
  std::string curves_path;
};

// Per seed: generate, pretrain once, measure direct transfer and the
// supervised upper bound, then adapt under every variant sharing the same
// pretrained weights. Emits sweep_table.csv (medians) and sweep_curves.csv
// (per-epoch expert-mean and ensemble mAP per variant and seed).
SweepResult cmd_sweep(const cfg::ExperimentConfig& cfg, const SweepOptions& opts,
                      std::ostream& log);

// The adaptation variants the sweep runs, in table order.
const std::vector<std::string>& sweep_variants();

}  // namespace meb::run
