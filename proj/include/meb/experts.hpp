#pragma once

// Heterogeneous feed-forward expert encoders with classifier heads and a
// temporally averaged parameter set that is updated only by EMA, never by
// the optimizer. All experts report features of the same width F; narrower
// encoders are zero-padded, wider ones pass through a learned projection.

#include <cstdint>
#include <string>
#include <vector>

#include "meb/common.hpp"
#include "meb/tensor.hpp"

namespace meb::model {

enum class Activation { kRelu, kTanh };

enum class SkipPattern { kNone, kResidual, kDenseConcat, kParallel };

struct ArchitectureSpec {
  std::string name;
  std::vector<int> widths;              // hidden widths; branch widths for kParallel
  std::vector<Activation> activations;  // one per layer/branch
  SkipPattern skip = SkipPattern::kNone;
  int feature_dim = 64;  // F, shared across all experts
};

// The stock trio: a dense-concat stack, a residual stack, and a bank of
// parallel branches, deliberately different in depth, width, and topology.
std::vector<ArchitectureSpec> default_architectures(int feature_dim = 64);

// Text names used by config files and checkpoints.
const char* activation_name(Activation a);
Activation parse_activation(const std::string& s);
const char* skip_pattern_name(SkipPattern p);
SkipPattern parse_skip_pattern(const std::string& s);

struct NamedTensor {
  std::string name;
  num::Tensor value;
};

struct ExpertModel {
  ArchitectureSpec arch;
  int input_dim = 0;
  std::vector<NamedTensor> theta;      // trained parameters (requires_grad)
  std::vector<NamedTensor> theta_avg;  // temporal average, EMA-only

  bool has_target_head() const;
};

struct ExpertOutput {
  num::Tensor features;    // [B, F]
  num::Tensor logits_src;  // [B, M_s]
  num::Tensor logits_tgt;  // [B, M_t]; undefined until the target head exists
};

enum class Params { kTheta, kThetaAvg };

// Fan-in-scaled Gaussian init, biases zero, theta_avg = theta exactly.
std::vector<ExpertModel> build_experts(const std::vector<ArchitectureSpec>& specs,
                                       int input_dim, int num_source_identities,
                                       std::uint64_t seed);

ExpertOutput forward(const ExpertModel& m, Params which, const num::Tensor& x);

// theta_avg := alpha * theta_avg + (1 - alpha) * theta, elementwise,
// classifier heads included.
void ema_update(ExpertModel& m, double alpha);

// Installs a fresh target head in both parameter sets: column j is the
// L2-normalized centroid j, bias zero. Rejects all-zero centroid rows.
void reset_target_head(ExpertModel& m, const num::Tensor& centroids);

void save_checkpoint(const std::string& stem, const ExpertModel& m);
ExpertModel load_checkpoint(const std::string& stem);

std::int64_t parameter_count(const ExpertModel& m);

// Deep copy under a new name (test/ablation helper; build_experts itself
// requires distinct architectures).
ExpertModel clone_expert(const ExpertModel& m, const std::string& new_name);

}  // namespace meb::model
