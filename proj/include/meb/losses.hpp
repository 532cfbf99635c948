#pragma once

// Training objectives: label-smoothed identity loss, softmax triplet loss
// with batch-hard mining, teacher-student mutual losses (identity and
// triplet), and their combination with pseudo-label voting terms. Teacher
// inputs are detached defensively inside every mutual loss, so teacher
// gradients are identically zero by construction.

#include <vector>

#include "meb/common.hpp"
#include "meb/tensor.hpp"

namespace meb::loss {

struct LossConfig {
  double epsilon = 0.1;        // label smoothing
  bool use_authority = false;  // weight teacher terms by `weights`
  std::vector<double> weights;  // per teacher, required when use_authority
  bool enable_mid = true;      // teacher-guided identity term
  bool enable_mtri = true;     // teacher-guided triplet term
};

struct MinedBatch {
  std::vector<int> anchor;    // 0..B-1
  std::vector<int> positive;  // hardest same-label sample (self if alone)
  std::vector<int> negative;  // nearest different-label sample
};

// Batch-hard mining on detached feature values. Requires >= 2 distinct
// labels. Ties resolve to the lowest index.
MinedBatch mine_hard(const num::Tensor& features, const std::vector<int>& labels);

// Mean over the batch of -sum_j q_j log softmax(logits)_j with
// q = 1 - eps + eps/C on the true class and eps/C elsewhere.
num::Tensor id_loss(const num::Tensor& logits, const std::vector<int>& labels,
                    double epsilon);

// Mean over anchors of log(1 + exp(d_pos - d_neg)), the negative log of
// the two-way softmax over anchor-negative vs anchor-positive distances.
num::Tensor softmax_triplet_loss(const num::Tensor& features, const MinedBatch& mined);

// P_i = sigmoid(d_neg - d_pos), clamped into [1e-7, 1 - 1e-7].
num::Tensor triplet_probability(const num::Tensor& features, const MinedBatch& mined);

// Distance-level forms, exposed so the dependence on (d_pos - d_neg) alone
// is directly testable.
num::Tensor softmax_triplet_from_distances(const num::Tensor& d_pos,
                                           const num::Tensor& d_neg);
num::Tensor triplet_probability_from_distances(const num::Tensor& d_pos,
                                               const num::Tensor& d_neg);

// Mean over the batch of -sum_j teacher_j log softmax(student)_j.
// Teacher rows must be nonnegative and sum to 1 within 1e-4.
num::Tensor mutual_id_loss(const num::Tensor& student_logits_tgt,
                           const num::Tensor& teacher_probs);

// Binary cross entropy between triplet probabilities, teacher as target.
// Raw inputs must lie strictly inside (0, 1).
num::Tensor mutual_triplet_loss(const num::Tensor& p_student,
                                const num::Tensor& p_teacher);

struct StudentState {
  num::Tensor features;    // [B, F], differentiable
  num::Tensor logits_tgt;  // [B, M_t], differentiable
};

struct TeacherState {
  num::Tensor features;   // [B, F]
  num::Tensor probs_tgt;  // [B, M_t], softmax outputs
};

struct BrainstormBreakdown {
  num::Tensor total;  // scalar, differentiable
  double mid = 0.0;
  double mtri = 0.0;
  double vot_id = 0.0;
  double vot_tri = 0.0;
  double total_value = 0.0;
  MinedBatch mined;
};

// Per-expert adaptation objective: teacher-guided identity and triplet
// terms averaged over the K-1 teachers (weighted when cfg.use_authority),
// plus identity and triplet terms on the pseudo-labels. Triplets are mined
// once from the student's features and shared with every teacher.
BrainstormBreakdown brainstorm_loss(const StudentState& student,
                                    const std::vector<TeacherState>& teachers,
                                    const std::vector<int>& pseudo_labels,
                                    const LossConfig& cfg);

}  // namespace meb::loss
