#pragma once

// Synthetic domain-shift retrieval benchmark: per-identity Gaussian clouds,
// an affine shift between domains, per-identity-per-camera viewpoint
// offsets, file I/O, and the P-identities-times-K-samples mini-batch
// sampler.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "meb/common.hpp"
#include "meb/tensor.hpp"

namespace meb::data {

enum class Domain { kSource, kTarget };

struct SampleRecord {
  std::vector<float> features;
  int identity = 0;
  int camera = 0;
  Domain domain = Domain::kSource;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct SplitDataset {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> query;
  std::vector<SampleRecord> gallery;
  int num_identities = 0;
  Domain domain = Domain::kSource;

  int dim() const;

  friend bool operator==(const SplitDataset&, const SplitDataset&) = default;
};

// Affine map applied to target prototypes; empty fields mean identity/zero.
struct DomainShift {
  std::vector<float> matrix;  // D*D row-major, empty = identity
  std::vector<float> offset;  // D, empty = zero
};

// Well-conditioned random map: orthogonal * diag(scales) * orthogonal with
// scales in [min_scale, max_scale], plus a Gaussian offset.
DomainShift random_domain_shift(int dim, Rng& rng, double min_scale = 0.6,
                                double max_scale = 1.6, double offset_sd = 0.5);

struct GeneratorConfig {
  int num_identities = 50;  // per domain; the domains use disjoint id ranges
  int cameras_per_domain = 4;
  int samples_per_identity = 20;  // train split
  int query_per_identity = 2;
  int gallery_per_identity = 4;
  int input_dim = 32;
  double identity_separation = 1.0;
  // Camera appearance has two parts. The shared offset is drawn once per
  // camera and displaces every identity that camera sees the same way (the
  // camera's own style); an encoder can learn to cancel it. The jitter
  // offset is drawn independently for every (identity, camera) pair (how
  // one identity happens to look from one viewpoint); it carries no common
  // structure, so nothing can exploit it, and it keeps the shared blobs
  // from being tighter than the identities themselves.
  double camera_shared_sd = 0.75;
  double camera_jitter_sd = 0.55;
  double noise_sd = 0.3;
  DomainShift domain_shift;
  std::uint64_t seed = 1;
};

struct DomainPair {
  SplitDataset source;
  SplitDataset target;
};

// Deterministic per seed. Source ids are 0..M-1, target ids M..2M-1.
DomainPair generate(const GeneratorConfig& cfg);

// Exactly P distinct labels with K records each; labels with fewer than K
// records are topped up by resampling with replacement. Returns indices
// into `records`, shuffled.
std::vector<int> pk_sample(const std::vector<SampleRecord>& records,
                           const std::vector<int>& labels, int p, int k, Rng& rng);

void save_dataset(const std::string& path, const SplitDataset& ds);
SplitDataset load_dataset(const std::string& path);

// Row-stacks the selected records' feature vectors into a [n, D] tensor.
num::Tensor stack_features(const std::vector<SampleRecord>& records,
                           const std::vector<int>& idx);
// All records, in order.
num::Tensor stack_features(const std::vector<SampleRecord>& records);

std::vector<int> identity_labels(const std::vector<SampleRecord>& records);

}  // namespace meb::data
