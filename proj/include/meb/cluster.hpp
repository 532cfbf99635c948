#pragma once

// Pseudo-label generation for the unlabelled target domain: cross-expert
// feature averaging followed by mini-batch k-means. Clustering is plain
// float data processing; nothing here records gradients.

#include <cstdint>
#include <vector>

#include "meb/dataset.hpp"
#include "meb/experts.hpp"
#include "meb/tensor.hpp"

namespace meb::cluster {

struct ClusterAssignment {
  std::vector<int> labels;   // per point, in [0, m)
  num::Tensor centroids;     // [m, F]
  std::vector<int> sizes;    // per cluster, sums to N, all >= 1
  double objective = 0.0;    // sum of squared point-to-centroid distances
};

// Row-wise L2 normalization, element-wise mean across the tensors, then a
// final renormalization. All inputs must share one shape. Zero rows stay
// zero. The building block of ensemble_features, exposed for direct tests.
num::Tensor average_normalized_rows(const std::vector<num::Tensor>& per_expert);

// Average feature of x across the experts' temporal-average parameters.
// Each expert's rows are L2-normalized before averaging so heterogeneous
// feature scales carry equal weight; rows of the result have unit norm
// (or zero for degenerate all-zero rows). Order of experts is immaterial.
num::Tensor ensemble_features(const std::vector<model::ExpertModel>& experts,
                              const num::Tensor& x);

// Nearest-centroid labels, sizes, and summed squared distance for fixed
// centroids (ties go to the lowest centroid index). Empty clusters are
// re-seeded to the worst-fit point of a cluster that can spare one, which
// strictly lowers the objective, until none remain; points with fewer than
// m distinct values make that impossible and raise an error.
ClusterAssignment finalize_assignment(const num::Tensor& points,
                                      const num::Tensor& centroids);

// Mini-batch k-means. Seeding is k-means++ on a random subsample of
// min(N, max(3*batch, 3*m)) points; each iteration assigns one sampled
// batch to the nearest centroids and moves every touched centroid toward
// its batch members with per-centroid step 1/count, counts accumulated
// across iterations. The better of the seeded and trained centroid sets
// under the full objective is finalized (see finalize_assignment), so the
// result never ends worse than its seeding.
//
// batch_size 0 means min(256, N). batch_size >= N disables batch sampling
// and processes all points in index order, which makes the per-iteration
// objective non-increasing. Deterministic in (points, m, batch, iters,
// seed); rng draws happen in a fixed order: subsample selection, seeding,
// then one batch draw per iteration.
ClusterAssignment minibatch_kmeans(const num::Tensor& points, int m,
                                   int batch_size, int iters, std::uint64_t seed);

// Copy of the records with identity replaced by the cluster label, so the
// training path never sees real target identities. Camera and domain pass
// through unchanged.
std::vector<data::SampleRecord> pseudo_labelled_records(
    const ClusterAssignment& assignment,
    const std::vector<data::SampleRecord>& records);

// Fraction of points whose cluster maps to their true label under the best
// one-to-one cluster-to-label matching (Hungarian). Reporting only.
double cluster_purity(const std::vector<int>& cluster_labels,
                      const std::vector<int>& true_labels);

// Maximum-weight one-to-one matching on a rectangular nonnegative weight
// matrix; returns, per row, the matched column or -1. Exposed for tests.
std::vector<int> max_weight_matching(const std::vector<std::vector<double>>& weight);

}  // namespace meb::cluster
