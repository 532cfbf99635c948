#pragma once

// Per-expert discrimination scoring: inter-/intra-cluster scatter of each
// expert's own feature space, combined into mean-normalized authority
// weights (the weights average to exactly 1 across experts).

#include <cstdint>
#include <string>
#include <vector>

#include "meb/experts.hpp"
#include "meb/tensor.hpp"

namespace meb::authority {

struct IntraScatter {
  std::vector<double> per_cluster;  // sum of squared deviations per cluster
  num::Tensor means;                // [m, F] cluster means
};

struct ExpertAuthority {
  std::string name;
  double s_intra_total = 0.0;
  double s_inter = 0.0;
  double j = 0.0;  // s_inter / max(s_intra_total, 1e-9)
  double w = 0.0;  // K * j / sum_k j
};

struct AuthorityReport {
  int epoch = 0;
  std::vector<ExpertAuthority> experts;
};

// Per-cluster sum of squared distances to the cluster mean. Every cluster
// in [0, m) must be non-empty.
IntraScatter intra_scatter(const num::Tensor& features,
                           const std::vector<int>& labels, int m);

// Sum over clusters of size * squared distance between the cluster mean
// and the global mean (the mean over all samples, not over cluster means).
double inter_scatter(const num::Tensor& means, const std::vector<int>& sizes,
                     const std::vector<double>& global_mean);

// Mean over all feature rows, in double.
std::vector<double> feature_mean(const num::Tensor& features);

// J = S_inter / max(sum_i S_intra^i, 1e-9) for one clustering.
double scatter_ratio(const num::Tensor& features, const std::vector<int>& labels, int m);

// w_e = K * J_e / sum_k J_k. All J must be > 0; the weights sum to K.
std::vector<double> authority_weights(const std::vector<double>& j);

// Authority from precomputed per-expert feature matrices: L2-normalize,
// cluster each expert's features into m groups with the same seed, compute
// scatter ratios, then mean-normalize. An expert whose intra scatter hits
// the 1e-9 floor gets its ratio capped at the largest un-floored ratio
// (all-floored degenerates to equal weights).
AuthorityReport authority_from_features(const std::vector<std::string>& names,
                                        const std::vector<num::Tensor>& features,
                                        int m, std::uint64_t seed, int epoch,
                                        int batch_size = 0, int iters = 50);

// Same, with features extracted from each expert's temporal-average
// parameters on x.
AuthorityReport epoch_authority(const std::vector<model::ExpertModel>& experts,
                                const num::Tensor& x, int m, std::uint64_t seed,
                                int epoch, int batch_size = 0, int iters = 50);

// The w column of a report, in expert order.
std::vector<double> weights_of(const AuthorityReport& report);

}  // namespace meb::authority
