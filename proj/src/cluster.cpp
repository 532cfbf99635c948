#include "meb/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "meb/common.hpp"

namespace meb::cluster {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dist2_to(const float* row, const double* center, int f) {
  double s = 0.0;
  for (int j = 0; j < f; ++j) {
    const double d = static_cast<double>(row[j]) - center[j];
    s += d * d;
  }
  return s;
}

double dist2_rows(const float* a, const float* b, int f) {
  double s = 0.0;
  for (int j = 0; j < f; ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    s += d * d;
  }
  return s;
}

// First k steps of a Fisher-Yates shuffle over idx.
void partial_shuffle(std::vector<int>& idx, int k, Rng& rng) {
  const int n = static_cast<int>(idx.size());
  for (int i = 0; i < k && i < n - 1; ++i) {
    const int j = i + rng.index(n - i);
    std::swap(idx[i], idx[j]);
  }
}

// Nearest centroid per point against float centroids; ties go to the
// lowest index. Returns the summed squared distance.
double full_assignment(const float* pts, int n, int f, const std::vector<float>& cf,
                       int m, std::vector<int>& labels, std::vector<int>& sizes) {
  labels.assign(n, 0);
  sizes.assign(m, 0);
  double objective = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = kInf;
    int best_c = 0;
    for (int c = 0; c < m; ++c) {
      const double d = dist2_rows(pts + static_cast<std::size_t>(i) * f,
                                  cf.data() + static_cast<std::size_t>(c) * f, f);
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    labels[i] = best_c;
    sizes[best_c] += 1;
    objective += best;
  }
  return objective;
}

// Minimum-cost perfect assignment on a square matrix via the classic
// potentials algorithm; returns row -> column.
std::vector<int> hungarian_min(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

num::Tensor average_normalized_rows(const std::vector<num::Tensor>& per_expert) {
  check(!per_expert.empty(), "average_normalized_rows: no inputs");
  const num::Shape shape = per_expert.front().shape();
  check(shape.size() == 2, "average_normalized_rows: inputs must be [n, f]");
  for (const auto& t : per_expert) {
    check(t.shape() == shape, "average_normalized_rows: mismatched input shapes");
  }
  const int n = shape[0];
  const int f = shape[1];
  const double k = static_cast<double>(per_expert.size());

  std::vector<double> acc(static_cast<std::size_t>(n) * f, 0.0);
  for (const auto& t : per_expert) {
    const float* d = t.data().data();
    for (int r = 0; r < n; ++r) {
      double sq = 0.0;
      for (int j = 0; j < f; ++j) {
        const double x = d[static_cast<std::size_t>(r) * f + j];
        sq += x * x;
      }
      const double denom = std::max(std::sqrt(sq), 1e-12);
      for (int j = 0; j < f; ++j) {
        acc[static_cast<std::size_t>(r) * f + j] +=
            d[static_cast<std::size_t>(r) * f + j] / denom;
      }
    }
  }

  std::vector<float> out(static_cast<std::size_t>(n) * f, 0.0f);
  for (int r = 0; r < n; ++r) {
    double sq = 0.0;
    for (int j = 0; j < f; ++j) {
      const double x = acc[static_cast<std::size_t>(r) * f + j] / k;
      sq += x * x;
    }
    const double denom = std::max(std::sqrt(sq), 1e-12);
    for (int j = 0; j < f; ++j) {
      out[static_cast<std::size_t>(r) * f + j] = static_cast<float>(
          acc[static_cast<std::size_t>(r) * f + j] / k / denom);
    }
  }
  return num::Tensor::from_data({n, f}, out, false);
}

num::Tensor ensemble_features(const std::vector<model::ExpertModel>& experts,
                              const num::Tensor& x) {
  check(!experts.empty(), "ensemble_features: no experts");
  std::vector<num::Tensor> feats;
  feats.reserve(experts.size());
  for (const auto& e : experts) {
    feats.push_back(model::forward(e, model::Params::kThetaAvg, x).features);
  }
  return average_normalized_rows(feats);
}

ClusterAssignment minibatch_kmeans(const num::Tensor& points, int m,
                                   int batch_size, int iters, std::uint64_t seed) {
  check(points.defined() && points.rank() == 2, "minibatch_kmeans: points must be [n, f]");
  const int n = points.shape()[0];
  const int f = points.shape()[1];
  check(m >= 1, "minibatch_kmeans: m must be >= 1");
  check(n >= m, "minibatch_kmeans: need at least m points, got " + std::to_string(n) +
                    " for m = " + std::to_string(m));
  check(iters >= 0, "minibatch_kmeans: iters must be >= 0");
  check(batch_size >= 0, "minibatch_kmeans: batch_size must be >= 0");
  int batch = batch_size == 0 ? std::min(256, n) : std::min(batch_size, n);

  const float* pts = points.data().data();
  Rng rng(seed);

  // Seeding subsample.
  const int init_size = std::min(n, std::max(3 * batch, 3 * m));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  partial_shuffle(order, init_size, rng);

  // k-means++ over the subsample: each next center drawn with probability
  // proportional to the squared distance to the nearest chosen center.
  std::vector<std::vector<double>> centers(m, std::vector<double>(f, 0.0));
  auto copy_point = [&](int src, std::vector<double>& dst) {
    for (int j = 0; j < f; ++j) dst[j] = pts[static_cast<std::size_t>(src) * f + j];
  };
  copy_point(order[rng.index(init_size)], centers[0]);
  std::vector<double> d2(init_size);
  for (int i = 0; i < init_size; ++i) {
    d2[i] = dist2_to(pts + static_cast<std::size_t>(order[i]) * f, centers[0].data(), f);
  }
  for (int c = 1; c < m; ++c) {
    double total = 0.0;
    for (int i = 0; i < init_size; ++i) total += d2[i];
    int pick;
    if (total <= 0.0) {
      pick = order[rng.index(init_size)];
    } else {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      int sel = init_size - 1;
      for (int i = 0; i < init_size; ++i) {
        cum += d2[i];
        if (cum >= r) {
          sel = i;
          break;
        }
      }
      pick = order[sel];
    }
    copy_point(pick, centers[c]);
    for (int i = 0; i < init_size; ++i) {
      d2[i] = std::min(d2[i], dist2_to(pts + static_cast<std::size_t>(order[i]) * f,
                                       centers[c].data(), f));
    }
  }

  std::vector<float> seeded(static_cast<std::size_t>(m) * f);
  for (int c = 0; c < m; ++c) {
    for (int j = 0; j < f; ++j) {
      seeded[static_cast<std::size_t>(c) * f + j] = static_cast<float>(centers[c][j]);
    }
  }

  // Mini-batch updates. Assignments for the whole batch are computed
  // against the pre-update centers, then centers move toward their batch
  // members; this keeps the full-batch case monotone in the objective.
  std::vector<std::int64_t> counts(m, 0);
  std::vector<int> scratch(n);
  std::vector<int> batch_assign(batch);
  for (int it = 0; it < iters; ++it) {
    const int* bidx;
    if (batch >= n) {
      for (int i = 0; i < n; ++i) scratch[i] = i;
      bidx = scratch.data();
    } else {
      for (int i = 0; i < n; ++i) scratch[i] = i;
      partial_shuffle(scratch, batch, rng);
      bidx = scratch.data();
    }
    for (int b = 0; b < batch; ++b) {
      const float* row = pts + static_cast<std::size_t>(bidx[b]) * f;
      double best = kInf;
      int best_c = 0;
      for (int c = 0; c < m; ++c) {
        const double d = dist2_to(row, centers[c].data(), f);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      batch_assign[b] = best_c;
    }
    for (int b = 0; b < batch; ++b) {
      const int c = batch_assign[b];
      counts[c] += 1;
      const double eta = 1.0 / static_cast<double>(counts[c]);
      const float* row = pts + static_cast<std::size_t>(bidx[b]) * f;
      for (int j = 0; j < f; ++j) {
        centers[c][j] += eta * (static_cast<double>(row[j]) - centers[c][j]);
      }
    }
  }

  // Judge the seeded and trained centroid sets by the full objective over
  // float-rounded centroids, and finalize whichever is better.
  std::vector<float> trained(static_cast<std::size_t>(m) * f);
  for (int c = 0; c < m; ++c) {
    for (int j = 0; j < f; ++j) {
      trained[static_cast<std::size_t>(c) * f + j] = static_cast<float>(centers[c][j]);
    }
  }
  std::vector<int> tmp_labels, tmp_sizes;
  const double seeded_obj = full_assignment(pts, n, f, seeded, m, tmp_labels, tmp_sizes);
  const double trained_obj = full_assignment(pts, n, f, trained, m, tmp_labels, tmp_sizes);
  const std::vector<float>& winner = trained_obj <= seeded_obj ? trained : seeded;
  return finalize_assignment(points, num::Tensor::from_data({m, f}, winner, false));
}

ClusterAssignment finalize_assignment(const num::Tensor& points,
                                      const num::Tensor& centroids) {
  check(points.defined() && points.rank() == 2, "finalize_assignment: points must be [n, f]");
  check(centroids.defined() && centroids.rank() == 2,
        "finalize_assignment: centroids must be [m, f]");
  const int n = points.shape()[0];
  const int f = points.shape()[1];
  const int m = centroids.shape()[0];
  check(centroids.shape()[1] == f, "finalize_assignment: feature width mismatch");
  check(m >= 1 && n >= m, "finalize_assignment: need at least m points");
  const float* pts = points.data().data();

  const auto cspan = centroids.data();
  std::vector<float> cf(cspan.begin(), cspan.end());
  ClusterAssignment out;
  out.objective = full_assignment(pts, n, f, cf, m, out.labels, out.sizes);

  // Re-seed empty clusters to the worst-fit point of a cluster that can
  // spare one; each round strictly lowers the objective, so this stops.
  // The round cap only guards against exact duplicate points.
  int rounds = 0;
  while (std::find(out.sizes.begin(), out.sizes.end(), 0) != out.sizes.end()) {
    check(rounds++ < 4 * m + 8,
          "finalize_assignment: could not fill all clusters; points may have "
          "fewer than m distinct values");
    const int empty_c = static_cast<int>(
        std::find(out.sizes.begin(), out.sizes.end(), 0) - out.sizes.begin());
    int worst = -1;
    double worst_d = 0.0;
    for (int i = 0; i < n; ++i) {
      if (out.sizes[out.labels[i]] < 2) continue;
      const double d = dist2_rows(pts + static_cast<std::size_t>(i) * f,
                                  cf.data() + static_cast<std::size_t>(out.labels[i]) * f, f);
      if (d > worst_d) {
        worst_d = d;
        worst = i;
      }
    }
    check(worst >= 0,
          "finalize_assignment: could not fill all clusters; points may have "
          "fewer than m distinct values");
    for (int j = 0; j < f; ++j) {
      cf[static_cast<std::size_t>(empty_c) * f + j] =
          pts[static_cast<std::size_t>(worst) * f + j];
    }
    out.objective = full_assignment(pts, n, f, cf, m, out.labels, out.sizes);
  }

  out.centroids = num::Tensor::from_data({m, f}, cf, false);
  return out;
}

std::vector<data::SampleRecord> pseudo_labelled_records(
    const ClusterAssignment& assignment,
    const std::vector<data::SampleRecord>& records) {
  check(assignment.labels.size() == records.size(),
        "pseudo_labelled_records: assignment covers " +
            std::to_string(assignment.labels.size()) + " points but got " +
            std::to_string(records.size()) + " records");
  std::vector<data::SampleRecord> out = records;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].identity = assignment.labels[i];
  }
  return out;
}

std::vector<int> max_weight_matching(const std::vector<std::vector<double>>& weight) {
  if (weight.empty()) return {};
  const int rows = static_cast<int>(weight.size());
  const int cols = static_cast<int>(weight.front().size());
  check(cols > 0, "max_weight_matching: empty rows");
  double max_w = 0.0;
  for (const auto& row : weight) {
    check(static_cast<int>(row.size()) == cols, "max_weight_matching: ragged matrix");
    for (double w : row) {
      check(std::isfinite(w) && w >= 0.0, "max_weight_matching: weights must be >= 0");
      max_w = std::max(max_w, w);
    }
  }
  const int s = std::max(rows, cols);
  std::vector<std::vector<double>> cost(s, std::vector<double>(s, max_w));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) cost[i][j] = max_w - weight[i][j];
  }
  const std::vector<int> assign = hungarian_min(cost);
  std::vector<int> out(rows, -1);
  for (int i = 0; i < rows; ++i) {
    if (assign[i] >= 0 && assign[i] < cols) out[i] = assign[i];
  }
  return out;
}

double cluster_purity(const std::vector<int>& cluster_labels,
                      const std::vector<int>& true_labels) {
  check(cluster_labels.size() == true_labels.size() && !cluster_labels.empty(),
        "cluster_purity: label vectors must be non-empty and equal length");
  int nc = 0, ng = 0;
  for (std::size_t i = 0; i < cluster_labels.size(); ++i) {
    check(cluster_labels[i] >= 0 && true_labels[i] >= 0,
          "cluster_purity: labels must be >= 0");
    nc = std::max(nc, cluster_labels[i] + 1);
    ng = std::max(ng, true_labels[i] + 1);
  }
  std::vector<std::vector<double>> weight(nc, std::vector<double>(ng, 0.0));
  for (std::size_t i = 0; i < cluster_labels.size(); ++i) {
    weight[cluster_labels[i]][true_labels[i]] += 1.0;
  }
  const std::vector<int> match = max_weight_matching(weight);
  double agree = 0.0;
  for (int c = 0; c < nc; ++c) {
    if (match[c] >= 0) agree += weight[c][match[c]];
  }
  return agree / static_cast<double>(cluster_labels.size());
}

}  // namespace meb::cluster
