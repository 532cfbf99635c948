#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "meb/common.hpp"
#include "meb/losses.hpp"
#include "refmath.hpp"

using meb::Error;
using meb::Rng;
using namespace meb::loss;
using meb::num::GradTape;
using meb::num::Tensor;

namespace {

constexpr double kGradRtol = 1e-4;
constexpr double kGradAtol = 1e-5;
constexpr double kFdStep = 1e-3;
constexpr int kFdSeeds = 12;

std::vector<float> random_vec(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<float>(lo + rng.uniform() * (hi - lo));
  return v;
}

refmath::Vec dvec(const Tensor& t) {
  return refmath::Vec(t.data().begin(), t.data().end());
}

// Labels 0,0,1,1,2,2,... so every anchor has exactly one other positive.
std::vector<int> paired_labels(int b) {
  std::vector<int> labels(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) labels[static_cast<std::size_t>(i)] = i / 2;
  return labels;
}

// Row-normalized random probabilities.
std::vector<float> random_probs(Rng& rng, int b, int m) {
  std::vector<float> p(static_cast<std::size_t>(b) * m);
  for (int i = 0; i < b; ++i) {
    double sum = 0.0;
    std::vector<double> row(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      row[static_cast<std::size_t>(j)] = 0.05 + rng.uniform();
      sum += row[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < m; ++j) {
      p[static_cast<std::size_t>(i) * m + j] = static_cast<float>(row[static_cast<std::size_t>(j)] / sum);
    }
  }
  return p;
}

refmath::MinedRef to_ref(const MinedBatch& m) {
  return {m.positive, m.negative};
}

}  // namespace

// ---- identity loss -----------------------------------------------------------

TEST_CASE("identity loss at reference points") {
  // Near-perfect prediction with no smoothing costs nearly nothing.
  Tensor confident = Tensor::from_data({1, 2}, {50.0f, 0.0f});
  CHECK(id_loss(confident, {0}, 0.0).item() == doctest::Approx(0.0).epsilon(1e-6));

  // Smoothed target against p = (0.95, 0.05).
  Tensor logits = Tensor::from_data(
      {1, 2}, {std::log(0.95f), std::log(0.05f)});
  CHECK(id_loss(logits, {0}, 0.1).item() == doctest::Approx(0.1985152).epsilon(1e-4));

  // Uniform prediction costs ln C for any smoothing strength.
  Tensor uniform = Tensor::zeros({2, 4});
  for (double eps : {0.0, 0.1, 0.5}) {
    CHECK(id_loss(uniform, {1, 3}, eps).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-6));
  }
}

TEST_CASE("identity loss decreases strictly as the true class strengthens") {
  double prev = 1e9;
  for (float margin : {0.0f, 0.5f, 1.0f, 2.0f, 4.0f}) {
    Tensor logits = Tensor::from_data({1, 3}, {margin, 0.0f, 0.3f});
    const double v = id_loss(logits, {0}, 0.1).item();
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("identity loss matches the double-precision reference") {
  for (std::uint64_t seed = 1; seed <= kFdSeeds; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    const int b = 3 + rng.index(4);
    const int c = 2 + rng.index(5);
    auto lv = random_vec(rng, b * c, -2.0, 2.0);
    std::vector<int> labels(static_cast<std::size_t>(b));
    for (auto& y : labels) y = rng.index(static_cast<std::size_t>(c));

    Tensor logits = Tensor::from_data({b, c}, lv, true);
    GradTape tape;
    Tensor loss = id_loss(logits, labels, 0.1);
    const double ref = refmath::label_smooth_ce(dvec(logits), labels, 0.1, b, c);
    CHECK(std::abs(loss.item() - ref) < 1e-6);
    CHECK(loss.item() >= 0.0f);

    tape.backward(loss);
    auto f = [&](const refmath::Vec& x) {
      return refmath::label_smooth_ce(x, labels, 0.1, b, c);
    };
    const auto fd = refmath::central_diff(f, refmath::to_double(lv), kFdStep);
    CHECK(refmath::worst_excess(logits.grad(), fd, kGradRtol, kGradAtol) <= 0.0);
  }
}

TEST_CASE("identity loss rejects bad labels and smoothing") {
  Tensor logits = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(id_loss(logits, {0, 3}, 0.1), Error);
  CHECK_THROWS_AS(id_loss(logits, {0, -1}, 0.1), Error);
  CHECK_THROWS_AS(id_loss(logits, {0}, 0.1), Error);
  CHECK_THROWS_AS(id_loss(logits, {0, 1}, 1.0), Error);
}

// ---- mining --------------------------------------------------------------------

TEST_CASE("mining picks the farthest positive and nearest negative") {
  // 1-D layout: anchor 0 at x=0; positives at 0.1 and 0.9; negatives at
  // 0.5 and 2.0.
  Tensor feats = Tensor::from_data({5, 1}, {0.0f, 0.1f, 0.9f, 0.5f, 2.0f});
  const std::vector<int> labels = {0, 0, 0, 1, 1};
  MinedBatch m = mine_hard(feats, labels);
  CHECK(m.anchor[0] == 0);
  CHECK(m.positive[0] == 2);  // distance 0.9 beats 0.1
  CHECK(m.negative[0] == 3);  // distance 0.5 beats 2.0
}

TEST_CASE("an anchor with no other positive falls back to itself") {
  Tensor feats = Tensor::from_data({3, 1}, {0.0f, 1.0f, 2.0f});
  MinedBatch m = mine_hard(feats, {0, 1, 1});
  CHECK(m.positive[0] == 0);
  CHECK(m.negative[0] == 1);
}

TEST_CASE("single-label batches cannot be mined") {
  Tensor feats = Tensor::from_data({3, 1}, {0.0f, 1.0f, 2.0f});
  CHECK_THROWS_AS(mine_hard(feats, {4, 4, 4}), Error);
}

TEST_CASE("mining matches the brute-force reference on random batches") {
  for (std::uint64_t seed = 1; seed <= kFdSeeds; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    const int b = 6 + rng.index(7);
    const int f = 2 + rng.index(4);
    auto fv = random_vec(rng, b * f, -2.0, 2.0);
    std::vector<int> labels(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) labels[static_cast<std::size_t>(i)] = i % 3;

    MinedBatch got = mine_hard(Tensor::from_data({b, f}, fv), labels);
    refmath::MinedRef want = refmath::mine_brute(refmath::to_double(fv), labels, b, f);
    CHECK(got.positive == want.pos);
    CHECK(got.negative == want.neg);
  }
}

// ---- softmax triplet loss -------------------------------------------------------

TEST_CASE("equidistant positive and negative cost ln 2 per anchor") {
  // Unit square: same-label pairs along x, cross-label pairs along y.
  Tensor feats = Tensor::from_data({4, 2}, {0, 0, 1, 0, 0, 1, 1, 1});
  const std::vector<int> labels = {0, 0, 1, 1};
  MinedBatch m = mine_hard(feats, labels);
  Tensor loss = softmax_triplet_loss(feats, m);
  CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("coincident positives with a distant negative cost nearly nothing") {
  Tensor feats = Tensor::from_data({4, 1}, {0.0f, 0.0f, 100.0f, 100.0f});
  const std::vector<int> labels = {0, 0, 1, 1};
  Tensor loss = softmax_triplet_loss(feats, mine_hard(feats, labels));
  CHECK(loss.item() < 1e-6);
  CHECK(loss.item() >= 0.0f);
}

TEST_CASE("triplet objective depends only on the distance difference") {
  Rng rng(4);
  const int b = 6;
  auto dp = random_vec(rng, b, 0.2, 2.0);
  auto dn = random_vec(rng, b, 0.2, 2.0);
  Tensor a = softmax_triplet_from_distances(Tensor::from_data({b}, dp),
                                            Tensor::from_data({b}, dn));
  auto dp_shift = dp;
  auto dn_shift = dn;
  for (auto& v : dp_shift) v += 0.7f;
  for (auto& v : dn_shift) v += 0.7f;
  Tensor c = softmax_triplet_from_distances(Tensor::from_data({b}, dp_shift),
                                            Tensor::from_data({b}, dn_shift));
  CHECK(a.item() == doctest::Approx(c.item()).epsilon(1e-5));

  Tensor pa = triplet_probability_from_distances(Tensor::from_data({b}, dp),
                                                 Tensor::from_data({b}, dn));
  Tensor pc = triplet_probability_from_distances(Tensor::from_data({b}, dp_shift),
                                                 Tensor::from_data({b}, dn_shift));
  for (int i = 0; i < b; ++i) {
    CHECK(pa.at(i) == doctest::Approx(pc.at(i)).epsilon(1e-5));
  }
}

TEST_CASE("triplet loss gradient matches finite differences") {
  for (std::uint64_t seed = 1; seed <= kFdSeeds; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    const int b = 8;
    const int f = 2 + rng.index(4);
    auto fv = random_vec(rng, b * f, -2.0, 2.0);
    const auto labels = paired_labels(b);

    Tensor feats = Tensor::from_data({b, f}, fv, true);
    MinedBatch m = mine_hard(feats, labels);
    GradTape tape;
    Tensor loss = softmax_triplet_loss(feats, m);
    const refmath::MinedRef mr = to_ref(m);
    CHECK(std::abs(loss.item() - refmath::softmax_triplet(dvec(feats), mr, b, f)) < 1e-6);
    tape.backward(loss);

    auto fn = [&](const refmath::Vec& x) { return refmath::softmax_triplet(x, mr, b, f); };
    const auto fd = refmath::central_diff(fn, refmath::to_double(fv), kFdStep);
    CHECK(refmath::worst_excess(feats.grad(), fd, kGradRtol, kGradAtol) <= 0.0);
  }
}

// ---- mutual losses -----------------------------------------------------------

TEST_CASE("matching teacher and student distributions cost the entropy") {
  const int b = 2, m = 3;
  Rng rng(6);
  auto probs = random_probs(rng, b, m);
  // Student logits = log p reproduce p exactly under softmax.
  std::vector<float> logits(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) logits[i] = std::log(probs[i]);

  Tensor loss = mutual_id_loss(Tensor::from_data({b, m}, logits),
                               Tensor::from_data({b, m}, probs));
  double entropy = 0.0;
  for (float p : probs) entropy -= static_cast<double>(p) * std::log(static_cast<double>(p));
  CHECK(loss.item() == doctest::Approx(entropy / b).epsilon(1e-5));
}

TEST_CASE("a one-hot teacher reduces to negative log-likelihood") {
  Tensor logits = Tensor::from_data({1, 3}, {0.2f, 1.4f, -0.5f});
  Tensor teacher = Tensor::from_data({1, 3}, {0.0f, 1.0f, 0.0f});
  const refmath::Vec lp = refmath::log_softmax_rows(dvec(logits), 1, 3);
  CHECK(mutual_id_loss(logits, teacher).item() == doctest::Approx(-lp[1]).epsilon(1e-6));
}

TEST_CASE("teacher distributions must be normalized probabilities") {
  Tensor logits = Tensor::zeros({1, 3});
  CHECK_THROWS_WITH_AS(
      mutual_id_loss(logits, Tensor::from_data({1, 3}, {0.5f, 0.3f, 0.1f})),
      doctest::Contains("sums to"), Error);
  CHECK_THROWS_AS(mutual_id_loss(logits, Tensor::from_data({1, 3}, {1.2f, -0.2f, 0.0f})),
                  Error);
}

TEST_CASE("mutual identity gradient flows to the student only") {
  for (std::uint64_t seed = 1; seed <= kFdSeeds; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    const int b = 3 + rng.index(3);
    const int m = 3 + rng.index(3);
    auto lv = random_vec(rng, b * m, -2.0, 2.0);
    auto pv = random_probs(rng, b, m);

    Tensor logits = Tensor::from_data({b, m}, lv, true);
    // The teacher deliberately requires grad; detachment must still win.
    Tensor teacher = Tensor::from_data({b, m}, pv, true);
    GradTape tape;
    Tensor loss = mutual_id_loss(logits, teacher);
    const double ref = refmath::mutual_id(refmath::to_double(lv), refmath::to_double(pv), b, m);
    CHECK(std::abs(loss.item() - ref) < 1e-6);
    tape.backward(loss);

    for (float g : teacher.grad()) CHECK(g == 0.0f);

    auto fn = [&](const refmath::Vec& x) {
      return refmath::mutual_id(x, refmath::to_double(pv), b, m);
    };
    const auto fd = refmath::central_diff(fn, refmath::to_double(lv), kFdStep);
    CHECK(refmath::worst_excess(logits.grad(), fd, kGradRtol, kGradAtol) <= 0.0);
  }
}

TEST_CASE("triplet agreement costs the binary entropy at identical beliefs") {
  Tensor half = Tensor::from_data({2}, {0.5f, 0.5f});
  CHECK(mutual_triplet_loss(half, half).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  const double p = 0.3;
  Tensor both = Tensor::from_data({1}, {static_cast<float>(p)});
  const double h = -p * std::log(p) - (1 - p) * std::log(1 - p);
  CHECK(mutual_triplet_loss(both, both).item() == doctest::Approx(h).epsilon(1e-5));
}

TEST_CASE("triplet probabilities outside (0,1) are contract errors") {
  Tensor ok = Tensor::from_data({2}, {0.4f, 0.6f});
  CHECK_THROWS_AS(mutual_triplet_loss(Tensor::from_data({2}, {0.0f, 0.5f}), ok), Error);
  CHECK_THROWS_AS(mutual_triplet_loss(ok, Tensor::from_data({2}, {1.0f, 0.5f})), Error);
  CHECK_THROWS_AS(mutual_triplet_loss(ok, Tensor::from_data({2}, {1.2f, 0.5f})), Error);
}

TEST_CASE("mutual triplet gradient flows to the student only") {
  for (std::uint64_t seed = 1; seed <= kFdSeeds; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    const int b = 4 + rng.index(4);
    // Probabilities kept away from {0, 1}: the BCE third derivative grows
    // as 1/p^3, and beyond ~0.25 the finite-difference truncation error at
    // step 1e-3 would exceed the comparison tolerance.
    auto ps = random_vec(rng, b, 0.25, 0.75);
    auto pt = random_vec(rng, b, 0.25, 0.75);

    Tensor p_student = Tensor::from_data({b}, ps, true);
    Tensor p_teacher = Tensor::from_data({b}, pt, true);
    GradTape tape;
    Tensor loss = mutual_triplet_loss(p_student, p_teacher);
    CHECK(std::abs(loss.item() - refmath::bce_mean(refmath::to_double(ps),
                                                   refmath::to_double(pt))) < 1e-6);
    tape.backward(loss);

    for (float g : p_teacher.grad()) CHECK(g == 0.0f);

    auto fn = [&](const refmath::Vec& x) {
      return refmath::bce_mean(x, refmath::to_double(pt));
    };
    const auto fd = refmath::central_diff(fn, refmath::to_double(ps), kFdStep);
    CHECK(refmath::worst_excess(p_student.grad(), fd, kGradRtol, kGradAtol) <= 0.0);
  }
}

// ---- combined objective ---------------------------------------------------------

namespace {

struct BrainstormFixture {
  int b = 8, f = 4, mt = 4;
  std::vector<int> pseudo;
  std::vector<float> sf, sl;                  // student features / logits
  std::vector<std::vector<float>> tf, tp;     // per-teacher features / probs
  StudentState student(bool with_grad = true) const {
    return {Tensor::from_data({b, f}, sf, with_grad),
            Tensor::from_data({b, mt}, sl, with_grad)};
  }
  std::vector<TeacherState> teachers(bool with_grad = false) const {
    std::vector<TeacherState> out;
    for (std::size_t e = 0; e < tf.size(); ++e) {
      out.push_back({Tensor::from_data({b, f}, tf[e], with_grad),
                     Tensor::from_data({b, mt}, tp[e], with_grad)});
    }
    return out;
  }
};

BrainstormFixture make_fixture(std::uint64_t seed, int n_teachers) {
  BrainstormFixture fx;
  Rng rng(seed);
  fx.pseudo = paired_labels(fx.b);
  fx.sf = random_vec(rng, fx.b * fx.f, -2.0, 2.0);
  fx.sl = random_vec(rng, fx.b * fx.mt, -2.0, 2.0);
  for (int e = 0; e < n_teachers; ++e) {
    fx.tf.push_back(random_vec(rng, fx.b * fx.f, -2.0, 2.0));
    fx.tp.push_back(random_probs(rng, fx.b, fx.mt));
  }
  return fx;
}

// Double-precision composite with frozen mined indices.
double brainstorm_ref(const BrainstormFixture& fx, const refmath::Vec& feats,
                      const refmath::Vec& logits, const refmath::MinedRef& mined,
                      const std::vector<double>& weights, double eps) {
  const int nt = static_cast<int>(fx.tf.size());
  double mid = 0.0, mtri = 0.0;
  const refmath::Vec p_s = refmath::triplet_prob(feats, mined, fx.b, fx.f);
  for (int e = 0; e < nt; ++e) {
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(e)];
    mid += w * refmath::mutual_id(logits, refmath::to_double(fx.tp[static_cast<std::size_t>(e)]),
                                  fx.b, fx.mt);
    const refmath::Vec p_t = refmath::triplet_prob(
        refmath::to_double(fx.tf[static_cast<std::size_t>(e)]), mined, fx.b, fx.f);
    mtri += w * refmath::bce_mean(p_s, p_t);
  }
  mid /= nt;
  mtri /= nt;
  const double vot_id = refmath::label_smooth_ce(logits, fx.pseudo, eps, fx.b, fx.mt);
  const double vot_tri = refmath::softmax_triplet(feats, mined, fx.b, fx.f);
  return mid + mtri + vot_id + vot_tri;
}

}  // namespace

TEST_CASE("combined objective composes its terms and stays nonnegative") {
  auto fx = make_fixture(3, 2);
  LossConfig cfg;
  auto student = fx.student();
  auto breakdown = brainstorm_loss(student, fx.teachers(), fx.pseudo, cfg);
  CHECK(breakdown.total_value ==
        doctest::Approx(breakdown.mid + breakdown.mtri + breakdown.vot_id +
                        breakdown.vot_tri).epsilon(1e-5));
  CHECK(breakdown.mid >= 0.0);
  CHECK(breakdown.mtri >= 0.0);
  CHECK(breakdown.vot_id >= 0.0);
  CHECK(breakdown.vot_tri >= 0.0);
  CHECK(std::isfinite(breakdown.total_value));

  const double ref = brainstorm_ref(fx, refmath::to_double(fx.sf),
                                    refmath::to_double(fx.sl), to_ref(breakdown.mined),
                                    {}, cfg.epsilon);
  CHECK(breakdown.total_value == doctest::Approx(ref).epsilon(1e-5));
}

TEST_CASE("with a single teacher the mutual terms equal that teacher's losses") {
  auto fx = make_fixture(5, 1);
  LossConfig cfg;
  auto student = fx.student();
  auto teachers = fx.teachers();
  auto breakdown = brainstorm_loss(student, teachers, fx.pseudo, cfg);

  Tensor mid = mutual_id_loss(student.logits_tgt, teachers[0].probs_tgt);
  CHECK(breakdown.mid == doctest::Approx(mid.item()).epsilon(1e-6));

  Tensor p_s = triplet_probability(student.features, breakdown.mined);
  Tensor p_t = triplet_probability(teachers[0].features, breakdown.mined);
  Tensor mtri = mutual_triplet_loss(p_s, p_t);
  CHECK(breakdown.mtri == doctest::Approx(mtri.item()).epsilon(1e-6));
}

TEST_CASE("disabled terms drop out of the breakdown exactly") {
  auto fx = make_fixture(7, 2);
  auto student = fx.student();
  auto teachers = fx.teachers();

  LossConfig no_mid;
  no_mid.enable_mid = false;
  auto b1 = brainstorm_loss(student, teachers, fx.pseudo, no_mid);
  CHECK(b1.mid == 0.0);
  CHECK(b1.total_value == doctest::Approx(b1.mtri + b1.vot_id + b1.vot_tri).epsilon(1e-5));

  LossConfig no_mtri;
  no_mtri.enable_mtri = false;
  auto b2 = brainstorm_loss(student, teachers, fx.pseudo, no_mtri);
  CHECK(b2.mtri == 0.0);

  LossConfig voting_only;
  voting_only.enable_mid = false;
  voting_only.enable_mtri = false;
  auto b3 = brainstorm_loss(student, teachers, fx.pseudo, voting_only);
  CHECK(b3.mid == 0.0);
  CHECK(b3.mtri == 0.0);
  CHECK(b3.total_value == doctest::Approx(b3.vot_id + b3.vot_tri).epsilon(1e-5));
}

TEST_CASE("unit authority weights reproduce the unweighted objective") {
  auto fx = make_fixture(9, 3);
  auto student = fx.student();
  auto teachers = fx.teachers();

  LossConfig plain;
  auto a = brainstorm_loss(student, teachers, fx.pseudo, plain);

  LossConfig weighted;
  weighted.use_authority = true;
  weighted.weights = {1.0, 1.0, 1.0};
  auto b = brainstorm_loss(student, teachers, fx.pseudo, weighted);

  CHECK(std::abs(a.total_value - b.total_value) < 1e-7);

  LossConfig skewed;
  skewed.use_authority = true;
  skewed.weights = {2.0, 0.5, 0.5};
  auto c = brainstorm_loss(student, teachers, fx.pseudo, skewed);
  CHECK(c.total_value != doctest::Approx(a.total_value).epsilon(1e-9));
}

TEST_CASE("combined gradient matches finite differences; teachers get none") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    CAPTURE(seed);
    auto fx = make_fixture(seed, 2);
    auto student = fx.student(true);
    auto teachers = fx.teachers(true);  // grads must still be zero

    LossConfig cfg;
    cfg.use_authority = true;
    cfg.weights = {1.3, 0.7};

    GradTape tape;
    auto breakdown = brainstorm_loss(student, teachers, fx.pseudo, cfg);
    tape.backward(breakdown.total);

    for (const auto& t : teachers) {
      for (float g : t.features.grad()) CHECK(g == 0.0f);
      for (float g : t.probs_tgt.grad()) CHECK(g == 0.0f);
    }

    const refmath::MinedRef mined = to_ref(breakdown.mined);
    const refmath::Vec base_f = refmath::to_double(fx.sf);
    const refmath::Vec base_l = refmath::to_double(fx.sl);

    auto f_feats = [&](const refmath::Vec& x) {
      return brainstorm_ref(fx, x, base_l, mined, cfg.weights, cfg.epsilon);
    };
    auto fd_f = refmath::central_diff(f_feats, base_f, kFdStep);
    CHECK(refmath::worst_excess(student.features.grad(), fd_f, kGradRtol, kGradAtol) <= 0.0);

    auto f_logits = [&](const refmath::Vec& x) {
      return brainstorm_ref(fx, base_f, x, mined, cfg.weights, cfg.epsilon);
    };
    auto fd_l = refmath::central_diff(f_logits, base_l, kFdStep);
    CHECK(refmath::worst_excess(student.logits_tgt.grad(), fd_l, kGradRtol, kGradAtol) <= 0.0);
  }
}

TEST_CASE("combined objective preconditions") {
  auto fx = make_fixture(11, 2);
  auto student = fx.student();
  LossConfig cfg;
  CHECK_THROWS_AS(brainstorm_loss(student, {}, fx.pseudo, cfg), Error);

  auto teachers = fx.teachers();
  std::vector<int> short_labels(static_cast<std::size_t>(fx.b - 1), 0);
  CHECK_THROWS_AS(brainstorm_loss(student, teachers, short_labels, cfg), Error);

  LossConfig bad_weights;
  bad_weights.use_authority = true;
  bad_weights.weights = {1.0};  // needs 2
  CHECK_THROWS_AS(brainstorm_loss(student, teachers, fx.pseudo, bad_weights), Error);

  LossConfig neg_weights;
  neg_weights.use_authority = true;
  neg_weights.weights = {1.0, -0.5};
  CHECK_THROWS_AS(brainstorm_loss(student, teachers, fx.pseudo, neg_weights), Error);
}
