#pragma once

// Experiment configuration: one file drives dataset generation, both
// training stages, and evaluation. Two on-disk formats share one schema:
// a sectioned key=value text format (the default) and a JSON mirror
// (detected when the file starts with '{'). Unknown keys are rejected
// with the offending key and line. The resolved form can be serialized
// back out and reparses to the identical configuration.

#include <cstdint>
#include <string>
#include <vector>

#include "meb/dataset.hpp"
#include "meb/experts.hpp"
#include "meb/trainloop.hpp"

namespace meb::cfg {

// Random affine map between the domains, materialized at generation time
// from the experiment seed. apply=false leaves the domains unshifted.
struct ShiftSpec {
  bool apply = true;
  double min_scale = 0.4;
  double max_scale = 2.2;
  double offset_sd = 1.0;

  friend bool operator==(const ShiftSpec&, const ShiftSpec&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out = "runs/exp";
  data::GeneratorConfig generator;  // seed field mirrors the top-level seed
  ShiftSpec shift;
  int feature_dim = 64;  // applied to expert specs that do not set their own
  std::vector<model::ArchitectureSpec> experts;  // resolved, never empty
  train::PretrainConfig pretrain;
  train::AdaptConfig adapt;
};

// Desk-scale defaults: the stock expert trio, a 50-identity 32-dim
// benchmark, short schedules that finish in minutes.
ExperimentConfig default_config();

// Parses either format; `origin` names the source in error messages.
ExperimentConfig parse_config(const std::string& text, const std::string& origin);

ExperimentConfig load_config(const std::string& path);

// Canonical key=value rendering of every resolved field. Reparsing the
// result reproduces the configuration exactly.
std::string resolved_text(const ExperimentConfig& cfg);

// Generator settings ready for data::generate: seed propagated and the
// domain shift materialized deterministically from the experiment seed.
data::GeneratorConfig resolved_generator(const ExperimentConfig& cfg);

// Ablation flag plumbing for the command line. Valid names: no_ema,
// no_mid, no_mtri, no_ar, voting_only, baseline_ensemble; "full" or ""
// clears all flags.
void set_ablation(train::AdaptConfig& adapt, const std::string& name);
std::string ablation_name(const train::AdaptConfig& adapt);
const std::vector<std::string>& ablation_names();

}  // namespace meb::cfg
