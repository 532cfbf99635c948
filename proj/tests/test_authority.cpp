#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "meb/authority.hpp"
#include "meb/common.hpp"
#include "meb/experts.hpp"

using meb::Error;
using meb::Rng;
using namespace meb::authority;
using meb::num::Tensor;

namespace {

Tensor random_features(int n, int f, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<float> data(static_cast<std::size_t>(n) * f);
  for (auto& v : data) v = static_cast<float>(rng.normal(0.0, scale));
  return Tensor::from_data({n, f}, std::move(data), false);
}

std::vector<int> cyclic_labels(int n, int m) {
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % m;
  return labels;
}

// Total scatter sum_i ||x_i - mu||^2 about the global mean, in double.
double total_scatter(const Tensor& features) {
  const auto mu = feature_mean(features);
  const int n = features.shape()[0];
  const int f = features.shape()[1];
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < f; ++j) {
      const double d = static_cast<double>(features.at(i, j)) - mu[j];
      s += d * d;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("intra scatter matches hand computations") {
  const Tensor identical =
      Tensor::from_data({3, 2}, {2.0f, -1.0f, 2.0f, -1.0f, 2.0f, -1.0f}, false);
  const IntraScatter zero = intra_scatter(identical, {0, 0, 0}, 1);
  CHECK(zero.per_cluster[0] == doctest::Approx(0.0));

  const Tensor pair = Tensor::from_data({2, 2}, {0.0f, 0.0f, 2.0f, 0.0f}, false);
  const IntraScatter one = intra_scatter(pair, {0, 0}, 1);
  CHECK(one.means.at(0, 0) == doctest::Approx(1.0));
  CHECK(one.means.at(0, 1) == doctest::Approx(0.0));
  CHECK(one.per_cluster[0] == doctest::Approx(2.0).epsilon(1e-12));

  // Shifting every feature by a constant leaves deviations unchanged up
  // to the float rounding of the shifted inputs themselves.
  const Tensor base = random_features(20, 3, 4);
  std::vector<float> shifted_data(base.data().begin(), base.data().end());
  for (auto& v : shifted_data) v += 1.5f;
  const Tensor shifted = Tensor::from_data({20, 3}, std::move(shifted_data), false);
  const auto labels = cyclic_labels(20, 4);
  const IntraScatter a = intra_scatter(base, labels, 4);
  const IntraScatter b = intra_scatter(shifted, labels, 4);
  for (int c = 0; c < 4; ++c) {
    CHECK(a.per_cluster[c] == doctest::Approx(b.per_cluster[c]).epsilon(1e-6));
  }

  CHECK_THROWS_WITH_AS(intra_scatter(pair, {0, 0}, 2), doctest::Contains("empty"), Error);
  CHECK_THROWS_AS(intra_scatter(pair, {0, 2}, 2), Error);
  CHECK_THROWS_AS(intra_scatter(pair, {0}, 1), Error);
}

TEST_CASE("inter scatter matches the hand oracle") {
  const Tensor pair = Tensor::from_data({2, 2}, {0.0f, 0.0f, 2.0f, 0.0f}, false);
  const IntraScatter one = intra_scatter(pair, {0, 0}, 1);
  CHECK(inter_scatter(one.means, {2}, feature_mean(pair)) ==
        doctest::Approx(0.0).epsilon(1e-9));

  const Tensor quads = Tensor::from_data(
      {4, 2}, {0.0f, 0.0f, 2.0f, 0.0f, 10.0f, 0.0f, 12.0f, 0.0f}, false);
  const std::vector<int> labels = {0, 0, 1, 1};
  const IntraScatter intra = intra_scatter(quads, labels, 2);
  const double s_inter = inter_scatter(intra.means, {2, 2}, feature_mean(quads));
  CHECK(s_inter == doctest::Approx(100.0).epsilon(1e-9));

  CHECK_THROWS_AS(inter_scatter(intra.means, {2}, feature_mean(quads)), Error);
  CHECK_THROWS_AS(inter_scatter(intra.means, {2, 0}, feature_mean(quads)), Error);
  CHECK_THROWS_AS(inter_scatter(intra.means, {2, 2}, {0.0}), Error);
}

TEST_CASE("total scatter decomposes into inter plus intra") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const Tensor features = random_features(40, 5, seed);
    const auto labels = cyclic_labels(40, 4);
    const IntraScatter intra = intra_scatter(features, labels, 4);
    std::vector<int> sizes(4, 0);
    for (int l : labels) sizes[l] += 1;
    const double s_inter = inter_scatter(intra.means, sizes, feature_mean(features));
    double s_intra = 0.0;
    for (double v : intra.per_cluster) s_intra += v;
    const double total = total_scatter(features);
    CHECK(std::abs(total - (s_inter + s_intra)) / total < 1e-6);
  }
}

TEST_CASE("authority weights are mean-normalized") {
  const auto w = authority_weights({2.0, 1.0, 1.0});
  CHECK(w[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(w[2] == doctest::Approx(0.75).epsilon(1e-12));

  const auto uniform = authority_weights({3.7, 3.7, 3.7, 3.7});
  for (double v : uniform) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  const auto base = authority_weights({0.4, 1.1, 2.2});
  const auto scaled = authority_weights({0.4 * 7.5, 1.1 * 7.5, 2.2 * 7.5});
  double sum = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(base[i] == doctest::Approx(scaled[i]).epsilon(1e-12));
    sum += base[i];
  }
  CHECK(sum == doctest::Approx(3.0).epsilon(1e-12));

  CHECK_THROWS_AS(authority_weights({}), Error);
  CHECK_THROWS_AS(authority_weights({1.0, 0.0}), Error);
  CHECK_THROWS_AS(authority_weights({1.0, -2.0}), Error);
}

TEST_CASE("scatter ratio ignores uniform scaling and translation") {
  const Tensor base = random_features(30, 4, 12);
  const auto labels = cyclic_labels(30, 3);
  const double j_base = scatter_ratio(base, labels, 3);
  CHECK(j_base > 0.0);

  std::vector<float> scaled_data(base.data().begin(), base.data().end());
  for (auto& v : scaled_data) v *= 2.5f;
  const Tensor scaled = Tensor::from_data({30, 4}, std::move(scaled_data), false);
  CHECK(scatter_ratio(scaled, labels, 3) == doctest::Approx(j_base).epsilon(1e-6));

  std::vector<float> shifted_data(base.data().begin(), base.data().end());
  for (auto& v : shifted_data) v += 3.0f;
  const Tensor shifted = Tensor::from_data({30, 4}, std::move(shifted_data), false);
  CHECK(scatter_ratio(shifted, labels, 3) == doctest::Approx(j_base).epsilon(1e-5));
}

TEST_CASE("identical experts get unit weights") {
  const auto experts = meb::model::build_experts(
      meb::model::default_architectures(), 10, 6, 2);
  const auto twin_a = meb::model::clone_expert(experts[0], "twin-a");
  const auto twin_b = meb::model::clone_expert(experts[0], "twin-b");
  const Tensor x = random_features(24, 10, 77);

  const AuthorityReport report = epoch_authority({twin_a, twin_b}, x, 4, 5, 3);
  CHECK(report.epoch == 3);
  REQUIRE(report.experts.size() == 2);
  CHECK(report.experts[0].name == "twin-a");
  CHECK(report.experts[1].name == "twin-b");
  for (const auto& e : report.experts) {
    CHECK(e.w == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(e.j > 0.0);
  }
  const auto w = weights_of(report);
  CHECK(w[0] + w[1] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("noise features earn less authority than structured features") {
  // Structured: three tight blobs at one-hot corners. Noise: isotropic.
  Rng rng(5);
  std::vector<float> structured;
  const int per_blob = 12;
  for (int blob = 0; blob < 3; ++blob) {
    for (int i = 0; i < per_blob; ++i) {
      for (int j = 0; j < 3; ++j) {
        const float center = j == blob ? 1.0f : 0.0f;
        structured.push_back(center + static_cast<float>(rng.normal(0.0, 0.05)));
      }
    }
  }
  const int n = per_blob * 3;
  const Tensor s = Tensor::from_data({n, 3}, std::move(structured), false);
  const Tensor noise = random_features(n, 3, 6);

  const AuthorityReport report =
      authority_from_features({"structured", "noise"}, {s, noise}, 3, 9, 0);
  REQUIRE(report.experts.size() == 2);
  CHECK(report.experts[0].w > report.experts[1].w);
  CHECK(report.experts[0].w + report.experts[1].w == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("floored intra scatter is capped at the best finite ratio") {
  // Expert A: three exact one-hot directions, repeated; every cluster
  // collapses to a point, so its intra scatter floors at zero.
  std::vector<float> exact;
  for (int rep = 0; rep < 4; ++rep) {
    for (int blob = 0; blob < 3; ++blob) {
      for (int j = 0; j < 3; ++j) exact.push_back(j == blob ? 1.0f : 0.0f);
    }
  }
  const Tensor degenerate = Tensor::from_data({12, 3}, std::move(exact), false);
  const Tensor smooth = random_features(12, 3, 8);

  const AuthorityReport report =
      authority_from_features({"degenerate", "smooth"}, {degenerate, smooth}, 3, 2, 1);
  CHECK(report.experts[0].s_intra_total == doctest::Approx(0.0));
  CHECK(report.experts[0].j == doctest::Approx(report.experts[1].j).epsilon(1e-12));
  for (const auto& e : report.experts) {
    CHECK(e.w == doctest::Approx(1.0).epsilon(1e-9));
  }

  // Two degenerate experts: no finite ratio to cap at, weights fall back
  // to uniform.
  const AuthorityReport both =
      authority_from_features({"a", "b"}, {degenerate, degenerate}, 3, 2, 1);
  for (const auto& e : both.experts) {
    CHECK(e.w == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("authority input contracts") {
  const Tensor f = random_features(10, 3, 1);
  CHECK_THROWS_AS(authority_from_features({"a"}, {}, 2, 1, 0), Error);
  CHECK_THROWS_AS(authority_from_features({"a", "b"}, {f}, 2, 1, 0), Error);
  CHECK_THROWS_AS(epoch_authority({}, f, 2, 1, 0), Error);
}
