#include "meb/eval.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "meb/common.hpp"

namespace meb::eval {

MetricsReport evaluate(const num::Tensor& query_features,
                       const std::vector<data::SampleRecord>& query_meta,
                       const num::Tensor& gallery_features,
                       const std::vector<data::SampleRecord>& gallery_meta,
                       int ranks) {
  check(query_features.defined() && query_features.rank() == 2,
        "evaluate: query features must be [q, f]");
  check(gallery_features.defined() && gallery_features.rank() == 2,
        "evaluate: gallery features must be [g, f]");
  const int q = query_features.shape()[0];
  const int g = gallery_features.shape()[0];
  const int f = query_features.shape()[1];
  check(gallery_features.shape()[1] == f, "evaluate: feature width mismatch");
  check(static_cast<int>(query_meta.size()) == q, "evaluate: one meta row per query required");
  check(static_cast<int>(gallery_meta.size()) == g,
        "evaluate: one meta row per gallery record required");
  check(q >= 1, "evaluate: no queries");
  check(g >= 1, "evaluate: empty gallery");
  check(ranks >= 1, "evaluate: ranks must be >= 1");

  const float* qd = query_features.data().data();
  const float* gd = gallery_features.data().data();

  MetricsReport report;
  report.cmc.assign(ranks, 0.0);
  report.per_query_ap.assign(q, -1.0);

  std::vector<std::pair<double, int>> order;
  std::vector<double> cmc_acc(ranks, 0.0);
  double ap_acc = 0.0;
  int valid = 0;

  for (int i = 0; i < q; ++i) {
    order.clear();
    for (int j = 0; j < g; ++j) {
      if (gallery_meta[j].identity == query_meta[i].identity &&
          gallery_meta[j].camera == query_meta[i].camera) {
        continue;  // protocol exclusion
      }
      double d2 = 0.0;
      for (int k = 0; k < f; ++k) {
        const double d = static_cast<double>(qd[static_cast<std::size_t>(i) * f + k]) -
                         static_cast<double>(gd[static_cast<std::size_t>(j) * f + k]);
        d2 += d * d;
      }
      order.emplace_back(d2, j);
    }
    std::sort(order.begin(), order.end());  // pair order: distance, then index

    int num_pos = 0;
    for (const auto& [d2, j] : order) {
      if (gallery_meta[j].identity == query_meta[i].identity) num_pos += 1;
    }
    if (num_pos == 0) {
      report.skipped_queries += 1;
      continue;
    }

    double ap = 0.0;
    int hits = 0;
    int first_hit = -1;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (gallery_meta[order[k].second].identity != query_meta[i].identity) continue;
      hits += 1;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
      if (first_hit < 0) first_hit = static_cast<int>(k);
    }
    ap /= static_cast<double>(num_pos);
    report.per_query_ap[i] = ap;
    ap_acc += ap;
    for (int r = first_hit; r < ranks; ++r) cmc_acc[r] += 1.0;
    valid += 1;
  }

  check(valid > 0, "evaluate: every query lacked a valid positive");
  report.map = ap_acc / static_cast<double>(valid);
  for (int r = 0; r < ranks; ++r) {
    report.cmc[r] = cmc_acc[r] / static_cast<double>(valid);
  }
  return report;
}

}  // namespace meb::eval
