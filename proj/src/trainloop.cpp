#include "meb/trainloop.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "meb/cluster.hpp"
#include "meb/common.hpp"
#include "meb/losses.hpp"

namespace meb::train {
namespace {

std::vector<int> labels_at(const std::vector<int>& labels, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(labels[i]);
  return out;
}

void validate_common(double lr, double epsilon, int p, int k) {
  check(lr > 0.0, "train: lr must be > 0");
  check(epsilon >= 0.0 && epsilon < 1.0, "train: epsilon must be in [0, 1)");
  check(p >= 2, "train: p must be >= 2");
  check(k >= 1, "train: k must be >= 1");
}

}  // namespace

void adam_step(num::Tensor& param, std::span<const float> grad, AdamState& state,
               const AdamConfig& cfg) {
  check(param.defined(), "adam_step: undefined parameter");
  const std::size_t n = param.data().size();
  check(grad.size() == n, "adam_step: gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
    state.t = 0;
  }
  check(state.m.size() == n && state.v.size() == n, "adam_step: state size mismatch");
  check(cfg.lr > 0.0 && cfg.eps > 0.0, "adam_step: lr and eps must be > 0");
  check(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0,
        "adam_step: betas must be in [0, 1)");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  auto values = param.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    const double p = static_cast<double>(values[i]);
    const double g = static_cast<double>(grad[i]) + cfg.weight_decay * p;
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    values[i] = static_cast<float>(p - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

void AdamOptimizer::step(model::ExpertModel& m) {
  for (auto& nt : m.theta) {
    const std::vector<float> grad = nt.value.grad();
    adam_step(nt.value, grad, state_[nt.name], cfg_);
    nt.value.zero_grad();
  }
}

void AdamOptimizer::drop_state_with_prefix(const std::string& prefix) {
  for (auto it = state_.begin(); it != state_.end();) {
    if (it->first.rfind(prefix, 0) == 0) {
      it = state_.erase(it);
    } else {
      ++it;
    }
  }
}

num::Tensor eval_features(const model::ExpertModel& m,
                          const std::vector<data::SampleRecord>& records,
                          model::Params which) {
  check(!records.empty(), "eval_features: no records");
  const num::Tensor x = data::stack_features(records);
  return cluster::average_normalized_rows({model::forward(m, which, x).features});
}

eval::MetricsReport evaluate_expert(const model::ExpertModel& m,
                                    const data::SplitDataset& ds, int ranks,
                                    model::Params which) {
  eval::MetricsReport report =
      eval::evaluate(eval_features(m, ds.query, which), ds.query,
                     eval_features(m, ds.gallery, which), ds.gallery, ranks);
  report.expert = m.arch.name;
  return report;
}

eval::MetricsReport evaluate_ensemble(const std::vector<model::ExpertModel>& experts,
                                      const data::SplitDataset& ds, int ranks) {
  check(!experts.empty(), "evaluate_ensemble: no experts");
  const num::Tensor qf = cluster::ensemble_features(experts, data::stack_features(ds.query));
  const num::Tensor gf =
      cluster::ensemble_features(experts, data::stack_features(ds.gallery));
  eval::MetricsReport report = eval::evaluate(qf, ds.query, gf, ds.gallery, ranks);
  report.expert = "ensemble";
  return report;
}

PretrainResult pretrain_source(std::vector<model::ExpertModel>& experts,
                               const data::SplitDataset& source,
                               const PretrainConfig& cfg,
                               const PretrainCallback& on_epoch) {
  check(!experts.empty(), "pretrain_source: no experts");
  check(cfg.epochs >= 0, "pretrain_source: epochs must be >= 0");
  validate_common(cfg.lr, cfg.epsilon, cfg.p, cfg.k);
  const int n = static_cast<int>(source.train.size());
  check(n >= cfg.p * cfg.k, "pretrain_source: train split smaller than one batch");
  const std::vector<int> labels = data::identity_labels(source.train);
  const int iterations = std::max(1, n / (cfg.p * cfg.k));

  PretrainResult result;
  Rng master(cfg.seed);
  for (auto& m : experts) {
    Rng rng(master.fork_seed());
    AdamOptimizer opt(AdamConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      double factor = 1.0;
      for (int milestone : cfg.lr_milestones) {
        if (epoch >= milestone) factor *= 0.1;
      }
      opt.set_lr(cfg.lr * factor);

      double id_acc = 0.0;
      double tri_acc = 0.0;
      for (int iter = 0; iter < iterations; ++iter) {
        const std::vector<int> idx = data::pk_sample(source.train, labels, cfg.p, cfg.k, rng);
        const num::Tensor x = data::stack_features(source.train, idx);
        const std::vector<int> y = labels_at(labels, idx);
        num::GradTape tape;
        const model::ExpertOutput out = model::forward(m, model::Params::kTheta, x);
        const num::Tensor lid = loss::id_loss(out.logits_src, y, cfg.epsilon);
        const loss::MinedBatch mined = loss::mine_hard(out.features, y);
        const num::Tensor ltri = loss::softmax_triplet_loss(out.features, mined);
        const num::Tensor total = num::add(lid, ltri);
        tape.backward(total);
        id_acc += lid.item();
        tri_acc += ltri.item();
        opt.step(m);
      }

      PretrainEpochLog log;
      log.expert = m.arch.name;
      log.epoch = epoch;
      log.lr = cfg.lr * factor;
      log.id_loss = id_acc / iterations;
      log.tri_loss = tri_acc / iterations;
      log.total = log.id_loss + log.tri_loss;
      log.metrics = evaluate_expert(m, source, cfg.eval_ranks, model::Params::kTheta);
      log.metrics.epoch = epoch;
      if (on_epoch) on_epoch(log, m);
      result.epochs.push_back(std::move(log));
    }
  }
  for (auto& m : experts) {
    model::ema_update(m, 0.0);  // start the temporal averages from the trained weights
  }
  return result;
}

AdaptResult adapt_target(std::vector<model::ExpertModel>& experts,
                         const data::SplitDataset& target, const AdaptConfig& cfg,
                         const EpochCallback& on_epoch) {
  const int k_experts = static_cast<int>(experts.size());
  check(k_experts >= 2, "adapt_target: need at least two experts");
  check(cfg.epochs >= 0, "adapt_target: epochs must be >= 0");
  check(cfg.iterations_per_epoch >= 1, "adapt_target: iterations_per_epoch must be >= 1");
  check(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, "adapt_target: alpha must be in [0, 1]");
  check(cfg.m_t >= 2, "adapt_target: m_t must be >= 2");
  validate_common(cfg.lr, cfg.epsilon, cfg.p, cfg.k);
  check(cfg.m_t >= cfg.p, "adapt_target: m_t must cover p identities per batch");
  const int n = static_cast<int>(target.train.size());
  check(n >= cfg.m_t, "adapt_target: train split smaller than m_t");

  const bool mutual_off = cfg.voting_only || cfg.baseline_ensemble;
  const double alpha = cfg.no_ema ? 0.0 : cfg.alpha;

  const num::Tensor x_all = data::stack_features(target.train);
  const std::vector<int> true_labels = data::identity_labels(target.train);

  Rng seeds(cfg.seed);
  Rng batch_rng(seeds.fork_seed());
  std::vector<AdamOptimizer> opts;
  opts.reserve(experts.size());
  for (int e = 0; e < k_experts; ++e) {
    opts.emplace_back(AdamConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});
  }

  AdaptResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t cluster_seed = seeds.fork_seed();

    const num::Tensor ens = cluster::ensemble_features(experts, x_all);
    const cluster::ClusterAssignment assignment = cluster::minibatch_kmeans(
        ens, cfg.m_t, cfg.cluster_batch, cfg.cluster_iters, cluster_seed);
    const std::vector<data::SampleRecord> pseudo =
        cluster::pseudo_labelled_records(assignment, target.train);
    const std::vector<int> pseudo_labels = data::identity_labels(pseudo);

    // Fresh target heads, one per expert, built from the centroids of that
    // expert's own normalized features under the shared pseudo-labels.
    for (int e = 0; e < k_experts; ++e) {
      const num::Tensor own = cluster::average_normalized_rows(
          {model::forward(experts[e], model::Params::kThetaAvg, x_all).features});
      const num::Tensor centroids =
          authority::intra_scatter(own, pseudo_labels, cfg.m_t).means;
      model::reset_target_head(experts[e], centroids);
      opts[e].drop_state_with_prefix("head_tgt.");
    }

    authority::AuthorityReport auth;
    if (cfg.no_ar) {
      auth.epoch = epoch;
      for (const auto& m : experts) {
        authority::ExpertAuthority ea;
        ea.name = m.arch.name;
        ea.j = 1.0;
        ea.w = 1.0;
        auth.experts.push_back(std::move(ea));
      }
    } else {
      auth = authority::epoch_authority(experts, x_all, cfg.m_t, cluster_seed, epoch,
                                        cfg.cluster_batch, cfg.cluster_iters);
    }
    const std::vector<double> weights = authority::weights_of(auth);

    AdaptEpochLog log;
    log.epoch = epoch;
    log.cluster_objective = assignment.objective;
    log.pseudo_purity = cluster::cluster_purity(pseudo_labels, true_labels);
    log.pseudo_labels = pseudo_labels;
    log.authority = auth;
    log.experts.resize(experts.size());
    for (int e = 0; e < k_experts; ++e) log.experts[e].name = experts[e].arch.name;

    for (int iter = 0; iter < cfg.iterations_per_epoch; ++iter) {
      const std::vector<int> idx =
          data::pk_sample(pseudo, pseudo_labels, cfg.p, cfg.k, batch_rng);
      const num::Tensor x_batch = data::stack_features(pseudo, idx);
      const std::vector<int> y = labels_at(pseudo_labels, idx);

      // Read-only teacher snapshot for the whole batch, taken before any
      // student update so expert update order cannot matter.
      std::vector<loss::TeacherState> teacher_all;
      teacher_all.reserve(experts.size());
      for (const auto& m : experts) {
        const model::ExpertOutput out =
            model::forward(m, model::Params::kThetaAvg, x_batch);
        teacher_all.push_back({out.features, num::softmax_rows(out.logits_tgt)});
      }

      for (int e = 0; e < k_experts; ++e) {
        loss::LossConfig lcfg;
        lcfg.epsilon = cfg.epsilon;
        lcfg.enable_mid = !(mutual_off || cfg.no_mid);
        lcfg.enable_mtri = !(mutual_off || cfg.no_mtri);
        lcfg.use_authority = !cfg.no_ar;
        std::vector<loss::TeacherState> teachers;
        for (int t = 0; t < k_experts; ++t) {
          if (t == e) continue;
          teachers.push_back(teacher_all[t]);
          if (lcfg.use_authority) lcfg.weights.push_back(weights[t]);
        }
        try {
          num::GradTape tape;
          const model::ExpertOutput out =
              model::forward(experts[e], model::Params::kTheta, x_batch);
          const loss::BrainstormBreakdown bd =
              loss::brainstorm_loss({out.features, out.logits_tgt}, teachers, y, lcfg);
          tape.backward(bd.total);
          log.experts[e].mid += bd.mid;
          log.experts[e].mtri += bd.mtri;
          log.experts[e].vot_id += bd.vot_id;
          log.experts[e].vot_tri += bd.vot_tri;
          log.experts[e].total += bd.total_value;
        } catch (const Error& err) {
          throw Error("adapt_target: epoch " + std::to_string(epoch) + " iteration " +
                      std::to_string(iter) + " expert " + experts[e].arch.name +
                      ": " + err.what());
        }
        opts[e].step(experts[e]);
      }
      for (auto& m : experts) {
        model::ema_update(m, alpha);
      }
    }

    for (int e = 0; e < k_experts; ++e) {
      auto& el = log.experts[e];
      el.mid /= cfg.iterations_per_epoch;
      el.mtri /= cfg.iterations_per_epoch;
      el.vot_id /= cfg.iterations_per_epoch;
      el.vot_tri /= cfg.iterations_per_epoch;
      el.total /= cfg.iterations_per_epoch;
      el.metrics = evaluate_expert(experts[e], target, cfg.eval_ranks);
      el.metrics.epoch = epoch;
    }
    log.ensemble = evaluate_ensemble(experts, target, cfg.eval_ranks);
    log.ensemble.epoch = epoch;

    if (on_epoch) on_epoch(log, experts);
    result.epochs.push_back(std::move(log));
  }
  return result;
}

}  // namespace meb::train
