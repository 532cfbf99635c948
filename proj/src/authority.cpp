#include "meb/authority.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "meb/cluster.hpp"
#include "meb/common.hpp"

namespace meb::authority {
namespace {

constexpr double kIntraFloor = 1e-9;

void check_feature_matrix(const num::Tensor& features, const char* who) {
  check(features.defined() && features.rank() == 2 && features.shape()[0] >= 1,
        std::string(who) + ": features must be a non-empty [n, f] tensor");
}

}  // namespace

IntraScatter intra_scatter(const num::Tensor& features,
                           const std::vector<int>& labels, int m) {
  check_feature_matrix(features, "intra_scatter");
  const int n = features.shape()[0];
  const int f = features.shape()[1];
  check(static_cast<int>(labels.size()) == n, "intra_scatter: one label per row required");
  check(m >= 1, "intra_scatter: m must be >= 1");

  std::vector<int> sizes(m, 0);
  std::vector<double> mean_acc(static_cast<std::size_t>(m) * f, 0.0);
  const float* d = features.data().data();
  for (int i = 0; i < n; ++i) {
    const int c = labels[i];
    check(c >= 0 && c < m, "intra_scatter: label out of range");
    sizes[c] += 1;
    for (int j = 0; j < f; ++j) {
      mean_acc[static_cast<std::size_t>(c) * f + j] +=
          d[static_cast<std::size_t>(i) * f + j];
    }
  }
  for (int c = 0; c < m; ++c) {
    check(sizes[c] > 0, "intra_scatter: cluster " + std::to_string(c) + " is empty");
    for (int j = 0; j < f; ++j) {
      mean_acc[static_cast<std::size_t>(c) * f + j] /= static_cast<double>(sizes[c]);
    }
  }

  IntraScatter out;
  out.per_cluster.assign(m, 0.0);
  for (int i = 0; i < n; ++i) {
    const int c = labels[i];
    double sq = 0.0;
    for (int j = 0; j < f; ++j) {
      const double dv = static_cast<double>(d[static_cast<std::size_t>(i) * f + j]) -
                        mean_acc[static_cast<std::size_t>(c) * f + j];
      sq += dv * dv;
    }
    out.per_cluster[c] += sq;
  }
  std::vector<float> means_f(mean_acc.size());
  for (std::size_t i = 0; i < mean_acc.size(); ++i) {
    means_f[i] = static_cast<float>(mean_acc[i]);
  }
  out.means = num::Tensor::from_data({m, f}, means_f, false);
  return out;
}

double inter_scatter(const num::Tensor& means, const std::vector<int>& sizes,
                     const std::vector<double>& global_mean) {
  check_feature_matrix(means, "inter_scatter");
  const int m = means.shape()[0];
  const int f = means.shape()[1];
  check(static_cast<int>(sizes.size()) == m, "inter_scatter: one size per cluster required");
  check(static_cast<int>(global_mean.size()) == f,
        "inter_scatter: global mean dimension mismatch");
  const float* d = means.data().data();
  double s = 0.0;
  for (int c = 0; c < m; ++c) {
    check(sizes[c] >= 1, "inter_scatter: cluster sizes must be >= 1");
    double sq = 0.0;
    for (int j = 0; j < f; ++j) {
      const double dv =
          static_cast<double>(d[static_cast<std::size_t>(c) * f + j]) - global_mean[j];
      sq += dv * dv;
    }
    s += static_cast<double>(sizes[c]) * sq;
  }
  return s;
}

std::vector<double> feature_mean(const num::Tensor& features) {
  check_feature_matrix(features, "feature_mean");
  const int n = features.shape()[0];
  const int f = features.shape()[1];
  const float* d = features.data().data();
  std::vector<double> mean(f, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < f; ++j) {
      mean[j] += d[static_cast<std::size_t>(i) * f + j];
    }
  }
  for (int j = 0; j < f; ++j) mean[j] /= static_cast<double>(n);
  return mean;
}

double scatter_ratio(const num::Tensor& features, const std::vector<int>& labels, int m) {
  const IntraScatter intra = intra_scatter(features, labels, m);
  std::vector<int> sizes(m, 0);
  for (int l : labels) sizes[l] += 1;
  const double s_inter = inter_scatter(intra.means, sizes, feature_mean(features));
  double s_intra = 0.0;
  for (double v : intra.per_cluster) s_intra += v;
  return s_inter / std::max(s_intra, kIntraFloor);
}

std::vector<double> authority_weights(const std::vector<double>& j) {
  check(!j.empty(), "authority_weights: no scores");
  double total = 0.0;
  for (double v : j) {
    check(std::isfinite(v) && v > 0.0, "authority_weights: scores must be > 0");
    total += v;
  }
  const double k = static_cast<double>(j.size());
  std::vector<double> w(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) w[i] = k * j[i] / total;
  return w;
}

AuthorityReport authority_from_features(const std::vector<std::string>& names,
                                        const std::vector<num::Tensor>& features,
                                        int m, std::uint64_t seed, int epoch,
                                        int batch_size, int iters) {
  check(!features.empty(), "authority_from_features: no experts");
  check(names.size() == features.size(),
        "authority_from_features: one name per feature matrix required");

  AuthorityReport report;
  report.epoch = epoch;
  report.experts.resize(features.size());
  std::vector<bool> floored(features.size(), false);
  for (std::size_t e = 0; e < features.size(); ++e) {
    const num::Tensor normed = cluster::average_normalized_rows({features[e]});
    const cluster::ClusterAssignment a =
        cluster::minibatch_kmeans(normed, m, batch_size, iters, seed);
    const IntraScatter intra = intra_scatter(normed, a.labels, m);
    double s_intra = 0.0;
    for (double v : intra.per_cluster) s_intra += v;
    const double s_inter = inter_scatter(intra.means, a.sizes, feature_mean(normed));
    ExpertAuthority& ea = report.experts[e];
    ea.name = names[e];
    ea.s_intra_total = s_intra;
    ea.s_inter = s_inter;
    floored[e] = s_intra < kIntraFloor;
    ea.j = s_inter / std::max(s_intra, kIntraFloor);
  }

  // A floored denominator would let one near-degenerate clustering swamp
  // the normalization, so cap such ratios at the largest un-floored one.
  double max_finite = 0.0;
  bool any_finite = false;
  for (std::size_t e = 0; e < features.size(); ++e) {
    if (!floored[e]) {
      max_finite = std::max(max_finite, report.experts[e].j);
      any_finite = true;
    }
  }
  for (std::size_t e = 0; e < features.size(); ++e) {
    if (floored[e]) {
      report.experts[e].j = any_finite ? max_finite : 1.0;
    }
  }

  std::vector<double> j(features.size());
  for (std::size_t e = 0; e < features.size(); ++e) j[e] = report.experts[e].j;
  const std::vector<double> w = authority_weights(j);
  for (std::size_t e = 0; e < features.size(); ++e) report.experts[e].w = w[e];
  return report;
}

AuthorityReport epoch_authority(const std::vector<model::ExpertModel>& experts,
                                const num::Tensor& x, int m, std::uint64_t seed,
                                int epoch, int batch_size, int iters) {
  check(!experts.empty(), "epoch_authority: no experts");
  std::vector<std::string> names;
  std::vector<num::Tensor> features;
  names.reserve(experts.size());
  features.reserve(experts.size());
  for (const auto& e : experts) {
    names.push_back(e.arch.name);
    features.push_back(model::forward(e, model::Params::kThetaAvg, x).features);
  }
  return authority_from_features(names, features, m, seed, epoch, batch_size, iters);
}

std::vector<double> weights_of(const AuthorityReport& report) {
  std::vector<double> w;
  w.reserve(report.experts.size());
  for (const auto& e : report.experts) w.push_back(e.w);
  return w;
}

}  // namespace meb::authority
