#include "meb/losses.hpp"

#include <cmath>
#include <set>

namespace meb::loss {

namespace {

using num::Tensor;

constexpr float kProbFloor = 1e-7f;

// Squared distance between rows i and j of a [B, F] value block.
double sq_dist(std::span<const float> v, int f, int i, int j) {
  double acc = 0.0;
  for (int d = 0; d < f; ++d) {
    const double diff =
        static_cast<double>(v[static_cast<std::size_t>(i) * f + d]) -
        static_cast<double>(v[static_cast<std::size_t>(j) * f + d]);
    acc += diff * diff;
  }
  return acc;
}

void check_batch(const Tensor& features, const std::vector<int>& labels) {
  check(features.defined() && features.rank() == 2, "mine_hard: features must be [B, F]");
  check(static_cast<int>(labels.size()) == features.dim(0),
        "mine_hard: one label per feature row required");
}

}  // namespace

MinedBatch mine_hard(const num::Tensor& features, const std::vector<int>& labels) {
  check_batch(features, labels);
  const int b = features.dim(0);
  const int f = features.dim(1);
  check(std::set<int>(labels.begin(), labels.end()).size() >= 2,
        "mine_hard: batch must contain at least 2 distinct labels");

  const auto v = features.data();
  MinedBatch mined;
  mined.anchor.resize(static_cast<std::size_t>(b));
  mined.positive.resize(static_cast<std::size_t>(b));
  mined.negative.resize(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    mined.anchor[static_cast<std::size_t>(i)] = i;
    int pos = i;       // self when the anchor has no other positive
    double pos_d = -1.0;
    int neg = -1;
    double neg_d = 0.0;
    for (int j = 0; j < b; ++j) {
      if (j == i) continue;
      const double d = sq_dist(v, f, i, j);
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
        if (d > pos_d) {
          pos_d = d;
          pos = j;
        }
      } else if (neg < 0 || d < neg_d) {
        neg_d = d;
        neg = j;
      }
    }
    mined.positive[static_cast<std::size_t>(i)] = pos;
    mined.negative[static_cast<std::size_t>(i)] = neg;
  }
  return mined;
}

num::Tensor id_loss(const num::Tensor& logits, const std::vector<int>& labels,
                    double epsilon) {
  check(logits.defined() && logits.rank() == 2, "id_loss: logits must be [B, C]");
  check(epsilon >= 0.0 && epsilon < 1.0, "id_loss: epsilon must lie in [0, 1)");
  const int b = logits.dim(0);
  const int c = logits.dim(1);
  check(static_cast<int>(labels.size()) == b, "id_loss: one label per row required");

  std::vector<float> q(static_cast<std::size_t>(b) * c,
                       static_cast<float>(epsilon / c));
  for (int i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    check(y >= 0 && y < c, "id_loss: label " + std::to_string(y) + " out of range");
    q[static_cast<std::size_t>(i) * c + y] =
        static_cast<float>(1.0 - epsilon + epsilon / c);
  }
  Tensor targets = Tensor::from_data({b, c}, std::move(q));
  Tensor lp = num::log_softmax_rows(logits);
  return num::scale(num::sum_all(num::mul(targets, lp)), -1.0f / static_cast<float>(b));
}

num::Tensor softmax_triplet_from_distances(const num::Tensor& d_pos,
                                           const num::Tensor& d_neg) {
  check(d_pos.defined() && d_neg.defined() && d_pos.shape() == d_neg.shape(),
        "softmax_triplet: distance shapes must match");
  return num::mean_all(num::softplus(num::sub(d_pos, d_neg)));
}

num::Tensor triplet_probability_from_distances(const num::Tensor& d_pos,
                                               const num::Tensor& d_neg) {
  check(d_pos.defined() && d_neg.defined() && d_pos.shape() == d_neg.shape(),
        "triplet_probability: distance shapes must match");
  return num::clamp(num::sigmoid(num::sub(d_neg, d_pos)), kProbFloor, 1.0f - kProbFloor);
}

namespace {

void check_mined(const num::Tensor& features, const MinedBatch& mined) {
  const int b = features.dim(0);
  check(static_cast<int>(mined.anchor.size()) == b &&
            static_cast<int>(mined.positive.size()) == b &&
            static_cast<int>(mined.negative.size()) == b,
        "mined batch does not match the feature batch size");
}

std::pair<Tensor, Tensor> mined_distances(const num::Tensor& features,
                                          const MinedBatch& mined) {
  check(features.defined() && features.rank() == 2,
        "triplet loss: features must be [B, F]");
  check_mined(features, mined);
  Tensor anchors = num::gather_rows(features, mined.anchor);
  Tensor positives = num::gather_rows(features, mined.positive);
  Tensor negatives = num::gather_rows(features, mined.negative);
  return {num::row_l2_distance(anchors, positives),
          num::row_l2_distance(anchors, negatives)};
}

}  // namespace

num::Tensor softmax_triplet_loss(const num::Tensor& features, const MinedBatch& mined) {
  auto [d_pos, d_neg] = mined_distances(features, mined);
  return softmax_triplet_from_distances(d_pos, d_neg);
}

num::Tensor triplet_probability(const num::Tensor& features, const MinedBatch& mined) {
  auto [d_pos, d_neg] = mined_distances(features, mined);
  return triplet_probability_from_distances(d_pos, d_neg);
}

num::Tensor mutual_id_loss(const num::Tensor& student_logits_tgt,
                           const num::Tensor& teacher_probs) {
  check(student_logits_tgt.defined() && student_logits_tgt.rank() == 2,
        "mutual_id_loss: student logits must be [B, M]");
  check(teacher_probs.defined() && teacher_probs.shape() == student_logits_tgt.shape(),
        "mutual_id_loss: teacher/student shapes must match");
  const int b = teacher_probs.dim(0);
  const int m = teacher_probs.dim(1);
  for (int i = 0; i < b; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < m; ++j) {
      const float p = teacher_probs.at(i, j);
      check(p >= 0.0f, "mutual_id_loss: teacher probabilities must be >= 0");
      row_sum += static_cast<double>(p);
    }
    check(std::abs(row_sum - 1.0) <= 1e-4,
          "mutual_id_loss: teacher row " + std::to_string(i) +
              " sums to " + std::to_string(row_sum) + ", expected 1");
  }
  Tensor teacher = teacher_probs.detach();
  Tensor lp = num::log_softmax_rows(student_logits_tgt);
  return num::scale(num::sum_all(num::mul(teacher, lp)), -1.0f / static_cast<float>(b));
}

num::Tensor mutual_triplet_loss(const num::Tensor& p_student,
                                const num::Tensor& p_teacher) {
  check(p_student.defined() && p_teacher.defined() &&
            p_student.shape() == p_teacher.shape(),
        "mutual_triplet_loss: probability shapes must match");
  for (const Tensor* t : {&p_student, &p_teacher}) {
    for (int i = 0; i < t->size(); ++i) {
      const float p = t->at(i);
      check(p > 0.0f && p < 1.0f,
            "mutual_triplet_loss: probability " + std::to_string(p) +
                " outside (0, 1)");
    }
  }
  const int b = p_student.size();
  Tensor pt = p_teacher.detach();
  Tensor one_minus_pt = num::add_scalar(num::neg(pt), 1.0f);
  Tensor ps = num::clamp(p_student, kProbFloor, 1.0f - kProbFloor);
  Tensor one_minus_ps = num::add_scalar(num::neg(ps), 1.0f);
  Tensor ce = num::add(num::mul(pt, num::log_op(ps)),
                       num::mul(one_minus_pt, num::log_op(one_minus_ps)));
  return num::scale(num::sum_all(ce), -1.0f / static_cast<float>(b));
}

BrainstormBreakdown brainstorm_loss(const StudentState& student,
                                    const std::vector<TeacherState>& teachers,
                                    const std::vector<int>& pseudo_labels,
                                    const LossConfig& cfg) {
  check(!teachers.empty(),
        "brainstorm_loss: need at least 2 experts (1 student + 1 teacher)");
  check(student.features.defined() && student.features.rank() == 2,
        "brainstorm_loss: student features must be [B, F]");
  check(student.logits_tgt.defined() && student.logits_tgt.rank() == 2,
        "brainstorm_loss: student target logits required");
  const int b = student.features.dim(0);
  check(static_cast<int>(pseudo_labels.size()) == b,
        "brainstorm_loss: one pseudo-label per batch row required");
  const int n_teachers = static_cast<int>(teachers.size());
  for (const auto& t : teachers) {
    check(t.features.defined() && t.features.shape() == student.features.shape(),
          "brainstorm_loss: teacher feature shape mismatch");
    check(t.probs_tgt.defined() && t.probs_tgt.shape() == student.logits_tgt.shape(),
          "brainstorm_loss: teacher probability shape mismatch");
  }
  if (cfg.use_authority) {
    check(static_cast<int>(cfg.weights.size()) == n_teachers,
          "brainstorm_loss: one authority weight per teacher required");
    for (double w : cfg.weights) {
      check(w > 0.0, "brainstorm_loss: authority weights must be > 0");
    }
  }

  BrainstormBreakdown out;
  out.mined = mine_hard(student.features, pseudo_labels);

  const float inv_teachers = 1.0f / static_cast<float>(n_teachers);
  Tensor total = Tensor::scalar(0.0f);

  if (cfg.enable_mid) {
    Tensor mid = Tensor::scalar(0.0f);
    if (cfg.use_authority) {
      for (int e = 0; e < n_teachers; ++e) {
        Tensor term = mutual_id_loss(student.logits_tgt,
                                     teachers[static_cast<std::size_t>(e)].probs_tgt);
        mid = num::add(mid, num::scale(term, static_cast<float>(cfg.weights[static_cast<std::size_t>(e)])));
      }
    } else {
      for (const auto& t : teachers) {
        mid = num::add(mid, mutual_id_loss(student.logits_tgt, t.probs_tgt));
      }
    }
    mid = num::scale(mid, inv_teachers);
    out.mid = static_cast<double>(mid.item());
    total = num::add(total, mid);
  }

  if (cfg.enable_mtri) {
    Tensor p_student = triplet_probability(student.features, out.mined);
    Tensor mtri = Tensor::scalar(0.0f);
    if (cfg.use_authority) {
      for (int e = 0; e < n_teachers; ++e) {
        Tensor p_teacher = triplet_probability(
            teachers[static_cast<std::size_t>(e)].features, out.mined);
        Tensor term = mutual_triplet_loss(p_student, p_teacher);
        mtri = num::add(mtri, num::scale(term, static_cast<float>(cfg.weights[static_cast<std::size_t>(e)])));
      }
    } else {
      for (const auto& t : teachers) {
        Tensor p_teacher = triplet_probability(t.features, out.mined);
        mtri = num::add(mtri, mutual_triplet_loss(p_student, p_teacher));
      }
    }
    mtri = num::scale(mtri, inv_teachers);
    out.mtri = static_cast<double>(mtri.item());
    total = num::add(total, mtri);
  }

  Tensor vot_id = id_loss(student.logits_tgt, pseudo_labels, cfg.epsilon);
  Tensor vot_tri = softmax_triplet_loss(student.features, out.mined);
  out.vot_id = static_cast<double>(vot_id.item());
  out.vot_tri = static_cast<double>(vot_tri.item());
  total = num::add(total, num::add(vot_id, vot_tri));

  out.total = total;
  out.total_value = static_cast<double>(total.item());
  return out;
}

}  // namespace meb::loss
