#pragma once

// Two-stage training orchestration: supervised pre-training of each expert
// on the labelled source split, then co-adaptation on the unlabelled
// target split with clustering pseudo-labels, temporal-average teachers,
// mutual losses, and authority weighting. Also houses the Adam optimizer
// shared by both stages.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "meb/authority.hpp"
#include "meb/dataset.hpp"
#include "meb/eval.hpp"
#include "meb/experts.hpp"
#include "meb/tensor.hpp"

namespace meb::train {

struct AdamConfig {
  double lr = 3.5e-4;
  double weight_decay = 5e-4;  // L2-coupled: added to the gradient
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;  // first-moment accumulator
  std::vector<double> v;  // second-moment accumulator
  long long t = 0;        // completed steps, drives bias correction
};

// One Adam update with bias correction; weight decay joins the gradient
// before the moment updates. All arithmetic runs in double and the
// parameter is rounded to float once per element. An empty state
// initializes itself to the parameter's size.
void adam_step(num::Tensor& param, std::span<const float> grad, AdamState& state,
               const AdamConfig& cfg);

// Per-tensor Adam states for one expert's trainable parameters, keyed by
// parameter name. step() applies the accumulated gradients of every theta
// tensor (absent gradients count as zero) and clears them.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

  void step(model::ExpertModel& m);
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }
  // Forgets moments whose key starts with prefix; used when the target
  // head is rebuilt and old moments would refer to stale cluster ids.
  void drop_state_with_prefix(const std::string& prefix);

 private:
  AdamConfig cfg_;
  std::map<std::string, AdamState> state_;
};

struct PretrainConfig {
  int epochs = 80;
  double lr = 3.5e-4;
  std::vector<int> lr_milestones = {40, 70};  // 1-based; each passes lr through x0.1
  double weight_decay = 5e-4;
  int p = 16;  // identities per batch
  int k = 4;   // samples per identity
  double epsilon = 0.1;
  int eval_ranks = 20;
  std::uint64_t seed = 1;
};

struct PretrainEpochLog {
  std::string expert;
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double id_loss = 0.0;   // means over the epoch's iterations
  double tri_loss = 0.0;
  double total = 0.0;
  eval::MetricsReport metrics;  // source query/gallery, current weights
};

struct PretrainResult {
  std::vector<PretrainEpochLog> epochs;
};

using PretrainCallback =
    std::function<void(const PretrainEpochLog&, const model::ExpertModel&)>;

// Trains each expert independently on the labelled source split: one epoch
// is floor(N / (P*K)) >= 1 batches of P identities x K samples, each
// optimizing the label-smoothed identity loss plus the mined triplet loss
// with Adam. Afterwards every theta_avg is synced to theta so adaptation
// starts its temporal averages from the trained weights. Zero epochs only
// performs the sync. on_epoch, when given, sees each epoch log with the
// expert it belongs to.
PretrainResult pretrain_source(std::vector<model::ExpertModel>& experts,
                               const data::SplitDataset& source,
                               const PretrainConfig& cfg,
                               const PretrainCallback& on_epoch = {});

struct AdaptConfig {
  int epochs = 40;
  int iterations_per_epoch = 800;
  double alpha = 0.999;  // teacher EMA coefficient
  int m_t = 500;         // pseudo-identity cluster count
  double lr = 3.5e-4;    // fixed for the whole stage
  double weight_decay = 5e-4;
  int p = 16;
  int k = 4;
  double epsilon = 0.1;
  int cluster_batch = 0;  // 0 means min(256, N)
  int cluster_iters = 50;
  int eval_ranks = 20;
  std::uint64_t seed = 1;
  // Ablations:
  bool no_ema = false;       // teachers read current weights (alpha forced to 0)
  bool no_mid = false;       // drop the teacher-guided identity term
  bool no_mtri = false;      // drop the teacher-guided triplet term
  bool no_ar = false;        // uniform teacher weights instead of authority
  bool voting_only = false;  // pseudo-label terms only (both mutual terms off)
  bool baseline_ensemble = false;  // co-clustered experts without mutual terms
};

struct ExpertEpochLog {
  std::string name;
  double mid = 0.0;  // iteration means of the loss components
  double mtri = 0.0;
  double vot_id = 0.0;
  double vot_tri = 0.0;
  double total = 0.0;
  eval::MetricsReport metrics;  // target query/gallery, temporal-average weights
};

struct AdaptEpochLog {
  int epoch = 0;  // 1-based
  double cluster_objective = 0.0;
  double pseudo_purity = 0.0;  // against hidden target identities, reporting only
  std::vector<int> pseudo_labels;        // per train record, this epoch's clustering
  authority::AuthorityReport authority;  // uniform when no_ar
  std::vector<ExpertEpochLog> experts;
  eval::MetricsReport ensemble;  // averaged-feature evaluation
};

struct AdaptResult {
  std::vector<AdaptEpochLog> epochs;
};

using EpochCallback =
    std::function<void(const AdaptEpochLog&, const std::vector<model::ExpertModel>&)>;

// Co-adapts pre-trained experts to the unlabelled target split. Per epoch:
// average temporal features over experts, cluster them into m_t pseudo
// identities, rebuild every target head from that expert's own cluster
// centroids, score per-expert authority (unless no_ar), then run
// iterations of: sample a P x K pseudo-label batch, snapshot all teacher
// outputs, per expert optimize the combined loss and apply Adam, then move
// each teacher by EMA. Epoch metrics (per expert and for the averaged
// features) are appended to the result and handed to on_epoch when given.
AdaptResult adapt_target(std::vector<model::ExpertModel>& experts,
                         const data::SplitDataset& target, const AdaptConfig& cfg,
                         const EpochCallback& on_epoch = {});

// L2-normalized feature rows for the records, from the chosen parameter
// set of one expert.
num::Tensor eval_features(const model::ExpertModel& m,
                          const std::vector<data::SampleRecord>& records,
                          model::Params which);

// Query/gallery retrieval metrics for one expert (temporal-average
// parameters unless told otherwise) or for the experts' averaged features.
eval::MetricsReport evaluate_expert(const model::ExpertModel& m,
                                    const data::SplitDataset& ds, int ranks,
                                    model::Params which = model::Params::kThetaAvg);
eval::MetricsReport evaluate_ensemble(const std::vector<model::ExpertModel>& experts,
                                      const data::SplitDataset& ds, int ranks);

}  // namespace meb::train
