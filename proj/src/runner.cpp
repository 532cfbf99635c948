#include "meb/runner.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>

#include "meb/cluster.hpp"
#include "meb/common.hpp"

namespace meb::run {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  check(ec == std::errc(), "runner: cannot format double");
  return std::string(buf, ptr);
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string epoch_dir(int epoch) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "epoch_%03d", epoch);
  return buf;
}

void write_json_file(const std::string& path, const ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// Every command leaves the reproduction trail at the run root.
void write_run_stamp(const cfg::ExperimentConfig& cfg, const std::string& dir) {
  ensure_dir(dir);
  write_text_file(dir + "/config.resolved.cfg", cfg::resolved_text(cfg));
  ordered_json manifest;
  manifest["version"] = version_string();
  manifest["seed"] = cfg.seed;
  write_json_file(dir + "/manifest.json", manifest);
}

data::SplitDataset load_split(const std::string& path, const cfg::ExperimentConfig& cfg,
                              const char* who) {
  data::SplitDataset ds = data::load_dataset(path);
  check(ds.dim() == cfg.generator.input_dim,
        std::string(who) + ": dataset '" + path + "' has dimension " +
            std::to_string(ds.dim()) + " but the config expects " +
            std::to_string(cfg.generator.input_dim));
  check(ds.num_identities == cfg.generator.num_identities,
        std::string(who) + ": dataset '" + path + "' holds " +
            std::to_string(ds.num_identities) + " identities but the config expects " +
            std::to_string(cfg.generator.num_identities));
  return ds;
}

void require_matching_arch(const model::ExpertModel& m, const model::ArchitectureSpec& spec,
                           int input_dim, const std::string& stem) {
  const auto mismatch = [&](const std::string& what) {
    throw Error("checkpoint '" + stem + "' does not match the config: " + what);
  };
  if (m.arch.name != spec.name) mismatch("name '" + m.arch.name + "' vs '" + spec.name + "'");
  if (m.arch.widths != spec.widths) mismatch("widths differ");
  if (m.arch.activations != spec.activations) mismatch("activations differ");
  if (m.arch.skip != spec.skip) mismatch("skip pattern differs");
  if (m.arch.feature_dim != spec.feature_dim) mismatch("feature_dim differs");
  if (m.input_dim != input_dim) mismatch("input_dim differs");
}

std::vector<model::ExpertModel> load_pretrained(const cfg::ExperimentConfig& cfg,
                                                const std::string& pretrain_dir,
                                                const char* who) {
  std::vector<model::ExpertModel> experts;
  for (const auto& spec : cfg.experts) {
    const std::string stem = pretrain_dir + "/checkpoints/final/" + spec.name;
    check(fs::exists(stem + ".json"),
          std::string(who) + ": missing pretrained checkpoint '" + stem +
              ".json' (run the pretrain stage first)");
    model::ExpertModel m = model::load_checkpoint(stem);
    require_matching_arch(m, spec, cfg.generator.input_dim, stem);
    experts.push_back(std::move(m));
  }
  return experts;
}

void save_expert_set(const std::string& dir, const std::vector<model::ExpertModel>& experts) {
  ensure_dir(dir);
  for (const auto& m : experts) model::save_checkpoint(dir + "/" + m.arch.name, m);
}

// Identities remapped to 0..M-1 so a labelled split can drive the
// supervised stage regardless of its global id range.
data::SplitDataset remap_identities(data::SplitDataset ds) {
  std::map<int, int> ids;
  auto collect = [&](const std::vector<data::SampleRecord>& recs) {
    for (const auto& r : recs) ids.emplace(r.identity, 0);
  };
  collect(ds.train);
  collect(ds.query);
  collect(ds.gallery);
  int next = 0;
  for (auto& [id, compact] : ids) compact = next++;
  auto apply = [&](std::vector<data::SampleRecord>& recs) {
    for (auto& r : recs) r.identity = ids.at(r.identity);
  };
  apply(ds.train);
  apply(ds.query);
  apply(ds.gallery);
  ds.num_identities = next;
  return ds;
}

void run_parallel(int workers, int tasks, const std::function<void(int)>& fn) {
  if (workers <= 1 || tasks <= 1) {
    for (int i = 0; i < tasks; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= tasks) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min(workers, tasks);
  pool.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

std::string version_string() { return "meb 1.0.0"; }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  check(!ec, "cannot create directory '" + dir + "': " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  check(out.is_open(), "cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  check(out.good(), "write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.is_open(), "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double median(std::vector<double> v) {
  check(!v.empty(), "median: no values");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ordered_json metrics_fields(const eval::MetricsReport& r) {
  ordered_json j;
  j["map"] = r.map;
  const int ranks[] = {1, 5, 10};
  for (int rank : ranks) {
    if (static_cast<std::size_t>(rank) <= r.cmc.size()) {
      j["cmc" + std::to_string(rank)] = r.cmc[static_cast<std::size_t>(rank) - 1];
    }
  }
  j["skipped_queries"] = r.skipped_queries;
  return j;
}

GenResult cmd_gen(const cfg::ExperimentConfig& cfg, std::ostream& log) {
  write_run_stamp(cfg, cfg.out);
  const data::GeneratorConfig gen = cfg::resolved_generator(cfg);
  const data::DomainPair pair = data::generate(gen);
  GenResult r;
  r.source_path = cfg.out + "/source.csv";
  r.target_path = cfg.out + "/target.csv";
  data::save_dataset(r.source_path, pair.source);
  data::save_dataset(r.target_path, pair.target);
  log << "gen: wrote " << r.source_path << " (" << pair.source.train.size()
      << " train) and " << r.target_path << " (" << pair.target.train.size()
      << " train)\n";
  return r;
}

PretrainRun cmd_pretrain(const cfg::ExperimentConfig& cfg, const RunOptions& opts,
                         std::ostream& log) {
  const std::string data_dir = opts.data_dir.empty() ? cfg.out : opts.data_dir;
  const std::string out_dir = opts.out_dir.empty() ? cfg.out : opts.out_dir;
  const std::string stage_dir = out_dir + "/pretrain";
  write_run_stamp(cfg, out_dir);
  ensure_dir(stage_dir);

  const data::SplitDataset source = load_split(data_dir + "/source.csv", cfg, "pretrain");

  PretrainRun run;
  run.dir = stage_dir;
  run.experts = model::build_experts(cfg.experts, cfg.generator.input_dim,
                                     source.num_identities, cfg.seed);

  std::ofstream metrics(stage_dir + "/metrics.jsonl", std::ios::binary);
  check(metrics.is_open(), "pretrain: cannot open '" + stage_dir + "/metrics.jsonl'");
  const auto on_epoch = [&](const train::PretrainEpochLog& ep, const model::ExpertModel& m) {
    ordered_json j;
    j["stage"] = "pretrain";
    j["epoch"] = ep.epoch;
    j["expert"] = ep.expert;
    j["lr"] = ep.lr;
    j["id_loss"] = ep.id_loss;
    j["tri_loss"] = ep.tri_loss;
    j["total"] = ep.total;
    j.update(metrics_fields(ep.metrics));
    metrics << j.dump() << "\n";
    if (opts.per_epoch_checkpoints) {
      const std::string dir = stage_dir + "/checkpoints/" + epoch_dir(ep.epoch);
      ensure_dir(dir);
      model::save_checkpoint(dir + "/" + m.arch.name, m);
    }
  };
  run.result = train::pretrain_source(run.experts, source, cfg.pretrain, on_epoch);
  metrics.flush();
  check(metrics.good(), "pretrain: write to '" + stage_dir + "/metrics.jsonl' failed");

  save_expert_set(stage_dir + "/checkpoints/final", run.experts);

  std::ostringstream curve;
  curve << "expert,epoch,map\n";
  for (const auto& ep : run.result.epochs) {
    curve << ep.expert << "," << ep.epoch << "," << fmt_double(ep.metrics.map) << "\n";
  }
  write_text_file(stage_dir + "/curve.csv", curve.str());

  ordered_json summary;
  summary["version"] = version_string();
  summary["stage"] = "pretrain";
  summary["seed"] = cfg.seed;
  summary["epochs"] = cfg.pretrain.epochs;
  ordered_json experts_json = ordered_json::array();
  for (const auto& m : run.experts) {
    ordered_json e;
    e["name"] = m.arch.name;
    for (auto it = run.result.epochs.rbegin(); it != run.result.epochs.rend(); ++it) {
      if (it->expert == m.arch.name) {
        e["final"] = metrics_fields(it->metrics);
        break;
      }
    }
    experts_json.push_back(std::move(e));
  }
  summary["experts"] = std::move(experts_json);
  write_json_file(stage_dir + "/summary.json", summary);

  for (const auto& m : run.experts) {
    for (auto it = run.result.epochs.rbegin(); it != run.result.epochs.rend(); ++it) {
      if (it->expert == m.arch.name) {
        log << "pretrain: " << m.arch.name << " source mAP "
            << fmt_double(it->metrics.map) << "\n";
        break;
      }
    }
  }
  return run;
}

AdaptRun cmd_adapt(const cfg::ExperimentConfig& cfg, const RunOptions& opts,
                   std::ostream& log) {
  const std::string data_dir = opts.data_dir.empty() ? cfg.out : opts.data_dir;
  const std::string out_dir = opts.out_dir.empty() ? cfg.out : opts.out_dir;
  const std::string pretrain_dir =
      opts.pretrain_dir.empty() ? out_dir + "/pretrain" : opts.pretrain_dir;
  const std::string ablation = cfg::ablation_name(cfg.adapt);
  const std::string stage_dir =
      out_dir + (ablation == "full" ? "/adapt" : "/adapt_" + ablation);
  write_run_stamp(cfg, out_dir);
  ensure_dir(stage_dir);

  const data::SplitDataset target = load_split(data_dir + "/target.csv", cfg, "adapt");

  AdaptRun run;
  run.dir = stage_dir;
  run.experts = load_pretrained(cfg, pretrain_dir, "adapt");

  std::ofstream metrics(stage_dir + "/metrics.jsonl", std::ios::binary);
  check(metrics.is_open(), "adapt: cannot open '" + stage_dir + "/metrics.jsonl'");
  std::ofstream clusters;
  if (opts.dump_clusters) {
    clusters.open(stage_dir + "/clusters.csv", std::ios::binary);
    check(clusters.is_open(), "adapt: cannot open '" + stage_dir + "/clusters.csv'");
    clusters << "epoch,record,pseudo_label,identity,camera\n";
  }

  const auto on_epoch = [&](const train::AdaptEpochLog& ep,
                            const std::vector<model::ExpertModel>& experts) {
    for (std::size_t e = 0; e < ep.experts.size(); ++e) {
      const auto& el = ep.experts[e];
      ordered_json j;
      j["stage"] = "adapt";
      j["epoch"] = ep.epoch;
      j["expert"] = el.name;
      j["mid"] = el.mid;
      j["mtri"] = el.mtri;
      j["vot_id"] = el.vot_id;
      j["vot_tri"] = el.vot_tri;
      j["total"] = el.total;
      j["j"] = ep.authority.experts[e].j;
      j["w"] = ep.authority.experts[e].w;
      j.update(metrics_fields(el.metrics));
      metrics << j.dump() << "\n";
    }
    ordered_json j;
    j["stage"] = "adapt";
    j["epoch"] = ep.epoch;
    j["expert"] = "ensemble";
    j["objective"] = ep.cluster_objective;
    j["purity"] = ep.pseudo_purity;
    j.update(metrics_fields(ep.ensemble));
    metrics << j.dump() << "\n";

    if (opts.dump_clusters) {
      for (std::size_t i = 0; i < ep.pseudo_labels.size(); ++i) {
        const auto& rec = target.train[i];
        clusters << ep.epoch << "," << i << "," << ep.pseudo_labels[i] << ","
                 << rec.identity << "," << rec.camera << "\n";
      }
    }
    if (opts.per_epoch_checkpoints) {
      save_expert_set(stage_dir + "/checkpoints/" + epoch_dir(ep.epoch), experts);
    }
  };

  try {
    run.result = train::adapt_target(run.experts, target, cfg.adapt, on_epoch);
  } catch (const Error& err) {
    ordered_json abort;
    abort["stage"] = "adapt";
    abort["ablation"] = ablation;
    abort["error"] = err.what();
    write_json_file(stage_dir + "/abort.json", abort);
    throw;
  }
  metrics.flush();
  check(metrics.good(), "adapt: write to '" + stage_dir + "/metrics.jsonl' failed");

  save_expert_set(stage_dir + "/checkpoints/final", run.experts);

  std::ostringstream curve;
  curve << "expert,epoch,map\n";
  for (const auto& ep : run.result.epochs) {
    for (const auto& el : ep.experts) {
      curve << el.name << "," << ep.epoch << "," << fmt_double(el.metrics.map) << "\n";
    }
    curve << "ensemble," << ep.epoch << "," << fmt_double(ep.ensemble.map) << "\n";
  }
  write_text_file(stage_dir + "/curve.csv", curve.str());

  ordered_json summary;
  summary["version"] = version_string();
  summary["stage"] = "adapt";
  summary["ablation"] = ablation;
  summary["seed"] = cfg.seed;
  summary["epochs"] = cfg.adapt.epochs;
  if (!run.result.epochs.empty()) {
    const auto& last = run.result.epochs.back();
    ordered_json final_json;
    final_json["ensemble"] = metrics_fields(last.ensemble);
    ordered_json experts_json = ordered_json::array();
    for (std::size_t e = 0; e < last.experts.size(); ++e) {
      const auto& el = last.experts[e];
      ordered_json ej;
      ej["name"] = el.name;
      ej["total_loss"] = el.total;
      ej["w"] = last.authority.experts[e].w;
      ej.update(metrics_fields(el.metrics));
      experts_json.push_back(std::move(ej));
    }
    final_json["experts"] = std::move(experts_json);
    summary["final"] = std::move(final_json);
    summary["final_purity"] = last.pseudo_purity;
    log << "adapt[" << ablation << "]: final ensemble mAP "
        << fmt_double(last.ensemble.map) << " (purity "
        << fmt_double(last.pseudo_purity) << ")\n";
  }
  write_json_file(stage_dir + "/summary.json", summary);
  return run;
}

EvalRun cmd_eval(const cfg::ExperimentConfig& cfg, std::vector<std::string> stems,
                 const RunOptions& opts, std::ostream& log) {
  const std::string data_dir = opts.data_dir.empty() ? cfg.out : opts.data_dir;
  const std::string out_dir = opts.out_dir.empty() ? cfg.out : opts.out_dir;
  const std::string pretrain_dir =
      opts.pretrain_dir.empty() ? out_dir + "/pretrain" : opts.pretrain_dir;
  const std::string stage_dir = out_dir + "/eval";
  write_run_stamp(cfg, out_dir);
  ensure_dir(stage_dir);

  const data::SplitDataset target = load_split(data_dir + "/target.csv", cfg, "eval");

  std::vector<model::ExpertModel> experts;
  if (stems.empty()) {
    experts = load_pretrained(cfg, pretrain_dir, "eval");
    for (const auto& m : experts) {
      stems.push_back(pretrain_dir + "/checkpoints/final/" + m.arch.name);
    }
  } else {
    for (const auto& stem : stems) {
      model::ExpertModel m = model::load_checkpoint(stem);
      check(m.input_dim == cfg.generator.input_dim,
            "eval: checkpoint '" + stem + "' input_dim does not match the config");
      experts.push_back(std::move(m));
    }
  }

  EvalRun run;
  run.dir = stage_dir;
  std::ofstream metrics(stage_dir + "/metrics.jsonl", std::ios::binary);
  check(metrics.is_open(), "eval: cannot open '" + stage_dir + "/metrics.jsonl'");
  for (const auto& m : experts) {
    eval::MetricsReport r = train::evaluate_expert(m, target, cfg.adapt.eval_ranks);
    ordered_json j;
    j["stage"] = "eval";
    j["expert"] = r.expert;
    j.update(metrics_fields(r));
    metrics << j.dump() << "\n";
    run.experts.push_back(std::move(r));
  }
  run.ensemble = train::evaluate_ensemble(experts, target, cfg.adapt.eval_ranks);
  {
    ordered_json j;
    j["stage"] = "eval";
    j["expert"] = "ensemble";
    j.update(metrics_fields(run.ensemble));
    metrics << j.dump() << "\n";
  }
  metrics.flush();
  check(metrics.good(), "eval: write to '" + stage_dir + "/metrics.jsonl' failed");

  ordered_json summary;
  summary["version"] = version_string();
  summary["stage"] = "eval";
  summary["seed"] = cfg.seed;
  summary["checkpoints"] = stems;
  ordered_json experts_json = ordered_json::array();
  for (const auto& r : run.experts) {
    ordered_json e;
    e["name"] = r.expert;
    e.update(metrics_fields(r));
    experts_json.push_back(std::move(e));
  }
  summary["experts"] = std::move(experts_json);
  summary["ensemble"] = metrics_fields(run.ensemble);
  write_json_file(stage_dir + "/summary.json", summary);

  log << "eval: ensemble target mAP " << fmt_double(run.ensemble.map) << "\n";
  return run;
}

const std::vector<std::string>& sweep_variants() {
  static const std::vector<std::string> variants = {
      "full",  "voting_only", "no_ema", "no_mid", "no_mtri", "no_ar",
      "baseline_ensemble"};
  return variants;
}

SweepResult cmd_sweep(const cfg::ExperimentConfig& cfg, const SweepOptions& opts,
                      std::ostream& log) {
  check(opts.seeds >= 1, "sweep: seeds must be >= 1");
  check(opts.parallel >= 1, "sweep: parallel must be >= 1");
  check(cfg.adapt.epochs >= 1, "sweep: adapt.epochs must be >= 1");
  write_run_stamp(cfg, cfg.out);

  std::mutex log_mu;
  const auto note = [&](const std::string& line) {
    std::lock_guard<std::mutex> lock(log_mu);
    log << line << "\n";
  };
  std::ostringstream devnull;

  const std::size_t k = cfg.experts.size();
  const int seeds = opts.seeds;
  std::vector<std::uint64_t> seed_values;
  for (int s = 0; s < seeds; ++s) seed_values.push_back(cfg.seed + static_cast<std::uint64_t>(s));

  auto with_seed = [&](std::uint64_t seed) {
    cfg::ExperimentConfig c = cfg;
    c.seed = seed;
    c.generator.seed = seed;
    c.pretrain.seed = seed;
    c.adapt.seed = seed;
    return c;
  };

  // Per-seed shared artifacts plus the supervised and direct-transfer rows.
  // map/cmc1 carry the expert-mean numbers, ens_* the feature-averaged
  // ensemble.
  struct SeedSide {
    std::string common_dir;
    double dt_map = 0.0, dt_cmc1 = 0.0, dt_ens_map = 0.0, dt_ens_cmc1 = 0.0;
    std::vector<double> dt_expert_map, dt_expert_cmc1;
    double sup_map = 0.0, sup_cmc1 = 0.0, sup_ens_map = 0.0, sup_ens_cmc1 = 0.0;
    std::vector<double> sup_expert_map, sup_expert_cmc1;
  };
  std::vector<SeedSide> side(static_cast<std::size_t>(seeds));
  const auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };

  run_parallel(opts.parallel, seeds, [&](int si) {
    const std::uint64_t seed = seed_values[static_cast<std::size_t>(si)];
    cfg::ExperimentConfig c = with_seed(seed);
    SeedSide& sd = side[static_cast<std::size_t>(si)];
    sd.common_dir = cfg.out + "/common/" + seed_dir(seed);
    c.out = sd.common_dir;
    std::ostringstream quiet;
    cmd_gen(c, quiet);

    RunOptions popts;
    popts.per_epoch_checkpoints = false;
    cmd_pretrain(c, popts, quiet);
    note("sweep: seed " + std::to_string(seed) + " pretrained");

    RunOptions eopts;
    eopts.data_dir = sd.common_dir;
    eopts.out_dir = cfg.out + "/direct_transfer/" + seed_dir(seed);
    eopts.pretrain_dir = sd.common_dir + "/pretrain";
    const EvalRun dt = cmd_eval(c, {}, eopts, quiet);
    sd.dt_ens_map = dt.ensemble.map;
    sd.dt_ens_cmc1 = dt.ensemble.cmc.empty() ? 0.0 : dt.ensemble.cmc[0];
    for (const auto& r : dt.experts) {
      sd.dt_expert_map.push_back(r.map);
      sd.dt_expert_cmc1.push_back(r.cmc.empty() ? 0.0 : r.cmc[0]);
    }
    sd.dt_map = mean_of(sd.dt_expert_map);
    sd.dt_cmc1 = mean_of(sd.dt_expert_cmc1);
    note("sweep: seed " + std::to_string(seed) + " direct transfer mAP " +
         fmt_double(sd.dt_map));

    // Supervised upper bound: the source-stage trainer fed the labelled
    // target split (identities remapped to a compact range).
    const data::SplitDataset target = data::load_dataset(sd.common_dir + "/target.csv");
    const data::SplitDataset labelled = remap_identities(target);
    cfg::ExperimentConfig csup = with_seed(seed);
    csup.out = cfg.out + "/supervised/" + seed_dir(seed);
    ensure_dir(csup.out);
    data::save_dataset(csup.out + "/source.csv", labelled);
    RunOptions sopts;
    sopts.per_epoch_checkpoints = false;
    std::ostringstream quiet2;
    const PretrainRun sup = cmd_pretrain(csup, sopts, quiet2);
    for (const auto& m : sup.experts) {
      for (auto it = sup.result.epochs.rbegin(); it != sup.result.epochs.rend(); ++it) {
        if (it->expert == m.arch.name) {
          sd.sup_expert_map.push_back(it->metrics.map);
          sd.sup_expert_cmc1.push_back(it->metrics.cmc.empty() ? 0.0 : it->metrics.cmc[0]);
          break;
        }
      }
    }
    const eval::MetricsReport sup_ens =
        train::evaluate_ensemble(sup.experts, labelled, cfg.adapt.eval_ranks);
    sd.sup_ens_map = sup_ens.map;
    sd.sup_ens_cmc1 = sup_ens.cmc.empty() ? 0.0 : sup_ens.cmc[0];
    sd.sup_map = mean_of(sd.sup_expert_map);
    sd.sup_cmc1 = mean_of(sd.sup_expert_cmc1);
    note("sweep: seed " + std::to_string(seed) + " supervised mAP " +
         fmt_double(sd.sup_map));
  });

  // Adaptation variants, all starting from the same pretrained weights.
  const auto& variants = sweep_variants();
  const int n_variants = static_cast<int>(variants.size());
  struct VariantCell {
    double map = 0.0, cmc1 = 0.0;          // expert-mean at the final epoch
    double ens_map = 0.0, ens_cmc1 = 0.0;  // ensemble at the final epoch
    std::vector<double> expert_map, expert_cmc1;
    std::vector<double> curve;      // expert-mean mAP per epoch
    std::vector<double> ens_curve;  // ensemble mAP per epoch
  };
  std::vector<std::vector<VariantCell>> cells(
      static_cast<std::size_t>(n_variants),
      std::vector<VariantCell>(static_cast<std::size_t>(seeds)));

  run_parallel(opts.parallel, n_variants * seeds, [&](int task) {
    const int vi = task / seeds;
    const int si = task % seeds;
    const std::uint64_t seed = seed_values[static_cast<std::size_t>(si)];
    const std::string& variant = variants[static_cast<std::size_t>(vi)];

    cfg::ExperimentConfig c = with_seed(seed);
    cfg::set_ablation(c.adapt, "full");
    cfg::set_ablation(c.adapt, variant);
    c.out = cfg.out + "/" + variant + "/" + seed_dir(seed);

    RunOptions aopts;
    aopts.data_dir = side[static_cast<std::size_t>(si)].common_dir;
    aopts.out_dir = c.out;
    aopts.pretrain_dir = side[static_cast<std::size_t>(si)].common_dir + "/pretrain";
    aopts.per_epoch_checkpoints = false;
    std::ostringstream quiet;
    const AdaptRun run = cmd_adapt(c, aopts, quiet);

    VariantCell& cell = cells[static_cast<std::size_t>(vi)][static_cast<std::size_t>(si)];
    const auto& last = run.result.epochs.back();
    for (const auto& ex : last.experts) {
      cell.expert_map.push_back(ex.metrics.map);
      cell.expert_cmc1.push_back(ex.metrics.cmc.empty() ? 0.0 : ex.metrics.cmc[0]);
    }
    cell.map = mean_of(cell.expert_map);
    cell.cmc1 = mean_of(cell.expert_cmc1);
    cell.ens_map = last.ensemble.map;
    cell.ens_cmc1 = last.ensemble.cmc.empty() ? 0.0 : last.ensemble.cmc[0];
    for (const auto& ep : run.result.epochs) {
      std::vector<double> em;
      for (const auto& ex : ep.experts) em.push_back(ex.metrics.map);
      cell.curve.push_back(mean_of(em));
      cell.ens_curve.push_back(ep.ensemble.map);
    }
    note("sweep: " + variant + " seed " + std::to_string(seed) + " final mAP " +
         fmt_double(cell.map));
  });

  SweepResult result;
  auto add_row = [&](const std::string& name, std::vector<double> maps,
                     std::vector<double> cmc1s) {
    SweepRow row;
    row.variant = name;
    row.map_median = median(maps);
    row.cmc1_median = median(cmc1s);
    row.maps = std::move(maps);
    row.cmc1s = std::move(cmc1s);
    result.rows.push_back(std::move(row));
  };

  const auto add_series = [&](const std::string& name, auto&& pick_mean,
                              auto&& pick_ens, auto&& pick_expert) {
    std::vector<double> maps, cmc1s, ens_maps, ens_cmc1s;
    for (int si = 0; si < seeds; ++si) {
      const auto [m, c] = pick_mean(si);
      maps.push_back(m);
      cmc1s.push_back(c);
      const auto [em, ec] = pick_ens(si);
      ens_maps.push_back(em);
      ens_cmc1s.push_back(ec);
    }
    add_row(name, std::move(maps), std::move(cmc1s));
    add_row(name + ":ensemble", std::move(ens_maps), std::move(ens_cmc1s));
    for (std::size_t e = 0; e < k; ++e) {
      std::vector<double> xm, xc;
      for (int si = 0; si < seeds; ++si) {
        const auto [m, c] = pick_expert(si, e);
        xm.push_back(m);
        xc.push_back(c);
      }
      add_row(name + ":" + cfg.experts[e].name, std::move(xm), std::move(xc));
    }
  };
  using Pair = std::pair<double, double>;
  add_series(
      "supervised",
      [&](int si) -> Pair {
        const auto& sd = side[static_cast<std::size_t>(si)];
        return {sd.sup_map, sd.sup_cmc1};
      },
      [&](int si) -> Pair {
        const auto& sd = side[static_cast<std::size_t>(si)];
        return {sd.sup_ens_map, sd.sup_ens_cmc1};
      },
      [&](int si, std::size_t e) -> Pair {
        const auto& sd = side[static_cast<std::size_t>(si)];
        return {sd.sup_expert_map[e], sd.sup_expert_cmc1[e]};
      });
  add_series(
      "direct_transfer",
      [&](int si) -> Pair {
        const auto& sd = side[static_cast<std::size_t>(si)];
        return {sd.dt_map, sd.dt_cmc1};
      },
      [&](int si) -> Pair {
        const auto& sd = side[static_cast<std::size_t>(si)];
        return {sd.dt_ens_map, sd.dt_ens_cmc1};
      },
      [&](int si, std::size_t e) -> Pair {
        const auto& sd = side[static_cast<std::size_t>(si)];
        return {sd.dt_expert_map[e], sd.dt_expert_cmc1[e]};
      });
  for (int vi = 0; vi < n_variants; ++vi) {
    const auto& row_cells = cells[static_cast<std::size_t>(vi)];
    add_series(
        variants[static_cast<std::size_t>(vi)],
        [&](int si) -> Pair {
          const auto& cell = row_cells[static_cast<std::size_t>(si)];
          return {cell.map, cell.cmc1};
        },
        [&](int si) -> Pair {
          const auto& cell = row_cells[static_cast<std::size_t>(si)];
          return {cell.ens_map, cell.ens_cmc1};
        },
        [&](int si, std::size_t e) -> Pair {
          const auto& cell = row_cells[static_cast<std::size_t>(si)];
          return {cell.expert_map[e], cell.expert_cmc1[e]};
        });
  }

  std::ostringstream table;
  table << "variant,seeds,map_median,cmc1_median\n";
  for (const auto& row : result.rows) {
    table << row.variant << "," << seeds << "," << fmt_double(row.map_median) << ","
          << fmt_double(row.cmc1_median) << "\n";
  }
  result.table_path = cfg.out + "/sweep_table.csv";
  write_text_file(result.table_path, table.str());

  std::ostringstream curves;
  curves << "variant,seed,epoch,map,ensemble_map\n";
  for (int vi = 0; vi < n_variants; ++vi) {
    for (int si = 0; si < seeds; ++si) {
      const auto& cell = cells[static_cast<std::size_t>(vi)][static_cast<std::size_t>(si)];
      for (std::size_t ep = 0; ep < cell.curve.size(); ++ep) {
        curves << variants[static_cast<std::size_t>(vi)] << "," << seed_values[static_cast<std::size_t>(si)]
               << "," << (ep + 1) << "," << fmt_double(cell.curve[ep]) << ","
               << fmt_double(cell.ens_curve[ep]) << "\n";
      }
    }
  }
  result.curves_path = cfg.out + "/sweep_curves.csv";
  write_text_file(result.curves_path, curves.str());

  note("sweep: table at " + result.table_path);
  return result;
}

}  // namespace meb::run
