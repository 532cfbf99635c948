#include "meb/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace meb::num {

namespace {

thread_local GradTape* g_active_tape = nullptr;

void check_finite(const std::vector<float>& v, const char* op) {
  for (float x : v) {
    if (!std::isfinite(x)) {
      throw Error(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

bool any_requires_grad(const std::vector<std::shared_ptr<detail::Node>>& ps) {
  for (const auto& p : ps) {
    if (p->requires_grad) return true;
  }
  return false;
}

}  // namespace

int shape_size(const Shape& s) {
  int n = 1;
  for (int d : s) {
    check(d > 0, "tensor shape extents must be positive");
    n *= d;
  }
  return n;
}

void record_op(const std::shared_ptr<detail::Node>& n);

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Tensor make_node(Shape shape, std::vector<float> value,
                 std::vector<NodePtr> parents,
                 std::function<void(Node&)> backward, const char* op) {
  check(static_cast<int>(value.size()) == shape_size(shape),
        std::string("internal: value size mismatch in op '") + op + "'");
  check_finite(value, op);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (g_active_tape != nullptr && any_requires_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
    record_op(n);
  }
  return Tensor(n);
}

// Adds a double-accumulated contribution to a parent's float grad buffer.
void add_grad(Node& parent, const std::vector<double>& contrib) {
  parent.ensure_grad();
  for (std::size_t i = 0; i < contrib.size(); ++i) {
    parent.grad[i] += static_cast<float>(contrib[i]);
  }
}

void require_matrix(const Tensor& t, const char* op) {
  check(t.defined() && t.rank() == 2,
        std::string(op) + ": expected a rank-2 tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.defined() && b.defined() && a.shape() == b.shape(),
        std::string(op) + ": shape mismatch");
}

// Generic elementwise unary op: f(x) and df(x, y) -> local derivative.
template <typename F, typename DF>
Tensor unary_op(const Tensor& x, const char* name, F f, DF df) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (float& v : out) v = static_cast<float>(f(static_cast<double>(v)));
  auto xn = x.node();
  std::vector<float> saved_in(x.data().begin(), x.data().end());
  return make_node(
      x.shape(), std::move(out), {xn},
      [xn, saved_in = std::move(saved_in), df](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double d = df(static_cast<double>(saved_in[i]),
                              static_cast<double>(self.value[i]));
          xn->grad[i] += static_cast<float>(self.grad[i] * d);
        }
      },
      name);
}

}  // namespace

// ---- Tensor --------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  const int sz = shape_size(shape);
  n->shape = std::move(shape);
  n->value.assign(static_cast<std::size_t>(sz), 0.0f);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data,
                         bool requires_grad) {
  check(static_cast<int>(data.size()) == shape_size(shape),
        "Tensor::from_data: data length does not match shape");
  check_finite(data, "from_data");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::scalar(float v) { return from_data({1}, {v}); }

float Tensor::item() const {
  check(defined() && size() == 1, "Tensor::item: tensor is not a scalar");
  return node_->value[0];
}

std::vector<float> Tensor::grad() const {
  if (!node_ || node_->grad.empty()) {
    return std::vector<float>(node_ ? node_->value.size() : 0, 0.0f);
  }
  return node_->grad;
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->requires_grad = false;
  return Tensor(n);
}

Tensor Tensor::clone() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->requires_grad = node_->requires_grad;
  return Tensor(n);
}

// ---- GradTape --------------------------------------------------------------

GradTape::GradTape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

GradTape::~GradTape() {
  if (g_active_tape == this) g_active_tape = prev_;
}

void record_op(const std::shared_ptr<detail::Node>& n) {
  g_active_tape->records_.push_back(n);
}

void GradTape::backward(const Tensor& root) {
  check(root.defined() && root.size() == 1,
        "GradTape::backward: root must have exactly one element");
  check(!used_, "GradTape::backward: tape already consumed");
  used_ = true;
  auto rn = root.node();
  rn->ensure_grad();
  rn->grad[0] = 1.0f;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    Node& n = **it;
    if (n.has_grad() && n.backward) n.backward(n);
  }
}

// ---- linear algebra --------------------------------------------------------

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_matrix(x, "affine");
  require_matrix(w, "affine");
  check(b.defined() && b.rank() == 1, "affine: bias must be rank-1");
  const int B = x.dim(0), I = x.dim(1), O = w.dim(1);
  check(w.dim(0) == I, "affine: x columns must match w rows");
  check(b.dim(0) == O, "affine: bias length must match w columns");

  std::vector<float> out(static_cast<std::size_t>(B) * O);
  const auto xv = x.data();
  const auto wv = w.data();
  const auto bv = b.data();
  for (int i = 0; i < B; ++i) {
    for (int j = 0; j < O; ++j) {
      double acc = bv[static_cast<std::size_t>(j)];
      for (int k = 0; k < I; ++k) {
        acc += static_cast<double>(xv[static_cast<std::size_t>(i) * I + k]) *
               static_cast<double>(wv[static_cast<std::size_t>(k) * O + j]);
      }
      out[static_cast<std::size_t>(i) * O + j] = static_cast<float>(acc);
    }
  }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_node(
      {B, O}, std::move(out), {xn, wn, bn},
      [xn, wn, bn, B, I, O](Node& self) {
        const auto& dy = self.grad;
        if (xn->requires_grad) {
          std::vector<double> dx(static_cast<std::size_t>(B) * I, 0.0);
          for (int i = 0; i < B; ++i) {
            for (int k = 0; k < I; ++k) {
              double acc = 0.0;
              for (int j = 0; j < O; ++j) {
                acc += static_cast<double>(dy[static_cast<std::size_t>(i) * O + j]) *
                       static_cast<double>(wn->value[static_cast<std::size_t>(k) * O + j]);
              }
              dx[static_cast<std::size_t>(i) * I + k] = acc;
            }
          }
          add_grad(*xn, dx);
        }
        if (wn->requires_grad) {
          std::vector<double> dw(static_cast<std::size_t>(I) * O, 0.0);
          for (int k = 0; k < I; ++k) {
            for (int j = 0; j < O; ++j) {
              double acc = 0.0;
              for (int i = 0; i < B; ++i) {
                acc += static_cast<double>(xn->value[static_cast<std::size_t>(i) * I + k]) *
                       static_cast<double>(dy[static_cast<std::size_t>(i) * O + j]);
              }
              dw[static_cast<std::size_t>(k) * O + j] = acc;
            }
          }
          add_grad(*wn, dw);
        }
        if (bn->requires_grad) {
          std::vector<double> db(static_cast<std::size_t>(O), 0.0);
          for (int i = 0; i < B; ++i) {
            for (int j = 0; j < O; ++j) {
              db[static_cast<std::size_t>(j)] +=
                  static_cast<double>(dy[static_cast<std::size_t>(i) * O + j]);
            }
          }
          add_grad(*bn, db);
        }
      },
      "affine");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const int B = a.dim(0), I = a.dim(1), O = b.dim(1);
  check(b.dim(0) == I, "matmul: inner dimensions must match");
  std::vector<float> out(static_cast<std::size_t>(B) * O);
  const auto av = a.data();
  const auto bv = b.data();
  for (int i = 0; i < B; ++i) {
    for (int j = 0; j < O; ++j) {
      double acc = 0.0;
      for (int k = 0; k < I; ++k) {
        acc += static_cast<double>(av[static_cast<std::size_t>(i) * I + k]) *
               static_cast<double>(bv[static_cast<std::size_t>(k) * O + j]);
      }
      out[static_cast<std::size_t>(i) * O + j] = static_cast<float>(acc);
    }
  }
  auto an = a.node(), bn = b.node();
  return make_node(
      {B, O}, std::move(out), {an, bn},
      [an, bn, B, I, O](Node& self) {
        const auto& dy = self.grad;
        if (an->requires_grad) {
          std::vector<double> da(static_cast<std::size_t>(B) * I, 0.0);
          for (int i = 0; i < B; ++i) {
            for (int k = 0; k < I; ++k) {
              double acc = 0.0;
              for (int j = 0; j < O; ++j) {
                acc += static_cast<double>(dy[static_cast<std::size_t>(i) * O + j]) *
                       static_cast<double>(bn->value[static_cast<std::size_t>(k) * O + j]);
              }
              da[static_cast<std::size_t>(i) * I + k] = acc;
            }
          }
          add_grad(*an, da);
        }
        if (bn->requires_grad) {
          std::vector<double> db(static_cast<std::size_t>(I) * O, 0.0);
          for (int k = 0; k < I; ++k) {
            for (int j = 0; j < O; ++j) {
              double acc = 0.0;
              for (int i = 0; i < B; ++i) {
                acc += static_cast<double>(an->value[static_cast<std::size_t>(i) * I + k]) *
                       static_cast<double>(dy[static_cast<std::size_t>(i) * O + j]);
              }
              db[static_cast<std::size_t>(k) * O + j] = acc;
            }
          }
          add_grad(*bn, db);
        }
      },
      "matmul");
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.data().begin(), a.data().end());
  for (int i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] += b.at(i);
  auto an = a.node(), bn = b.node();
  return make_node(
      a.shape(), std::move(out), {an, bn},
      [an, bn](Node& self) {
        for (auto* p : {an.get(), bn.get()}) {
          if (!p->requires_grad) continue;
          p->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.data().begin(), a.data().end());
  for (int i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] -= b.at(i);
  auto an = a.node(), bn = b.node();
  return make_node(
      a.shape(), std::move(out), {an, bn},
      [an, bn](Node& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.data().begin(), a.data().end());
  for (int i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] *= b.at(i);
  auto an = a.node(), bn = b.node();
  return make_node(
      a.shape(), std::move(out), {an, bn},
      [an, bn](Node& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            an->grad[i] += self.grad[i] * bn->value[i];
          }
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            bn->grad[i] += self.grad[i] * an->value[i];
          }
        }
      },
      "mul");
}

Tensor scale(const Tensor& x, float c) {
  return unary_op(
      x, "scale", [c](double v) { return v * c; },
      [c](double, double) { return static_cast<double>(c); });
}

Tensor add_scalar(const Tensor& x, float c) {
  return unary_op(
      x, "add_scalar", [c](double v) { return v + c; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      x, "neg", [](double v) { return -v; },
      [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh_act(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double out) { return 1.0 - out * out; });
}

Tensor log_op(const Tensor& x) {
  for (int i = 0; i < x.size(); ++i) {
    check(x.at(i) > 0.0f, "log: input must be strictly positive");
  }
  return unary_op(
      x, "log", [](double v) { return std::log(v); },
      [](double in, double) { return 1.0 / in; });
}

Tensor sigmoid(const Tensor& x) {
  auto f = [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return unary_op(
      x, "sigmoid", f,
      [](double, double out) { return out * (1.0 - out); });
}

Tensor softplus(const Tensor& x) {
  auto f = [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); };
  auto sig = [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return unary_op(
      x, "softplus", f,
      [sig](double in, double) { return sig(in); });
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  check(lo < hi, "clamp: lo must be < hi");
  return unary_op(
      x, "clamp",
      [lo, hi](double v) { return std::min(std::max(v, static_cast<double>(lo)), static_cast<double>(hi)); },
      [lo, hi](double in, double) { return (in > lo && in < hi) ? 1.0 : 0.0; });
}

// ---- row-wise ops ----------------------------------------------------------

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  const int B = x.dim(0), C = x.dim(1);
  std::vector<float> out(static_cast<std::size_t>(B) * C);
  for (int i = 0; i < B; ++i) {
    double m = -HUGE_VAL;
    for (int j = 0; j < C; ++j) m = std::max(m, static_cast<double>(x.at(i, j)));
    double denom = 0.0;
    std::vector<double> e(static_cast<std::size_t>(C));
    for (int j = 0; j < C; ++j) {
      e[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(x.at(i, j)) - m);
      denom += e[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < C; ++j) {
      out[static_cast<std::size_t>(i) * C + j] =
          static_cast<float>(e[static_cast<std::size_t>(j)] / denom);
    }
  }
  auto xn = x.node();
  return make_node(
      {B, C}, std::move(out), {xn},
      [xn, B, C](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int i = 0; i < B; ++i) {
          double dot = 0.0;
          for (int j = 0; j < C; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * C + j;
            dot += static_cast<double>(self.grad[k]) * static_cast<double>(self.value[k]);
          }
          for (int j = 0; j < C; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * C + j;
            xn->grad[k] += static_cast<float>(
                static_cast<double>(self.value[k]) *
                (static_cast<double>(self.grad[k]) - dot));
          }
        }
      },
      "softmax_rows");
}

Tensor log_softmax_rows(const Tensor& x) {
  require_matrix(x, "log_softmax_rows");
  const int B = x.dim(0), C = x.dim(1);
  std::vector<float> out(static_cast<std::size_t>(B) * C);
  for (int i = 0; i < B; ++i) {
    double m = -HUGE_VAL;
    for (int j = 0; j < C; ++j) m = std::max(m, static_cast<double>(x.at(i, j)));
    double denom = 0.0;
    for (int j = 0; j < C; ++j) denom += std::exp(static_cast<double>(x.at(i, j)) - m);
    const double lse = m + std::log(denom);
    for (int j = 0; j < C; ++j) {
      out[static_cast<std::size_t>(i) * C + j] =
          static_cast<float>(static_cast<double>(x.at(i, j)) - lse);
    }
  }
  auto xn = x.node();
  return make_node(
      {B, C}, std::move(out), {xn},
      [xn, B, C](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int i = 0; i < B; ++i) {
          double sum_dy = 0.0;
          for (int j = 0; j < C; ++j) {
            sum_dy += static_cast<double>(self.grad[static_cast<std::size_t>(i) * C + j]);
          }
          for (int j = 0; j < C; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * C + j;
            xn->grad[k] += static_cast<float>(
                static_cast<double>(self.grad[k]) -
                std::exp(static_cast<double>(self.value[k])) * sum_dy);
          }
        }
      },
      "log_softmax_rows");
}

// ---- distances -------------------------------------------------------------

// 1e-12 inside the sqrt removes the derivative singularity at zero distance.
constexpr double kDistEps = 1e-12;

Tensor pairwise_l2(const Tensor& a, const Tensor& c) {
  require_matrix(a, "pairwise_l2");
  require_matrix(c, "pairwise_l2");
  const int B = a.dim(0), D = a.dim(1), M = c.dim(0);
  check(c.dim(1) == D, "pairwise_l2: feature dimensions must match");
  std::vector<float> out(static_cast<std::size_t>(B) * M);
  for (int i = 0; i < B; ++i) {
    for (int j = 0; j < M; ++j) {
      double acc = kDistEps;
      for (int d = 0; d < D; ++d) {
        const double diff = static_cast<double>(a.at(i, d)) - static_cast<double>(c.at(j, d));
        acc += diff * diff;
      }
      out[static_cast<std::size_t>(i) * M + j] = static_cast<float>(std::sqrt(acc));
    }
  }
  auto an = a.node(), cn = c.node();
  return make_node(
      {B, M}, std::move(out), {an, cn},
      [an, cn, B, D, M](Node& self) {
        std::vector<double> da, dc;
        if (an->requires_grad) da.assign(static_cast<std::size_t>(B) * D, 0.0);
        if (cn->requires_grad) dc.assign(static_cast<std::size_t>(M) * D, 0.0);
        for (int i = 0; i < B; ++i) {
          for (int j = 0; j < M; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * M + j;
            const double g = static_cast<double>(self.grad[k]) /
                             static_cast<double>(self.value[k]);
            if (g == 0.0) continue;
            for (int d = 0; d < D; ++d) {
              const double diff =
                  static_cast<double>(an->value[static_cast<std::size_t>(i) * D + d]) -
                  static_cast<double>(cn->value[static_cast<std::size_t>(j) * D + d]);
              if (an->requires_grad) da[static_cast<std::size_t>(i) * D + d] += g * diff;
              if (cn->requires_grad) dc[static_cast<std::size_t>(j) * D + d] -= g * diff;
            }
          }
        }
        if (an->requires_grad) add_grad(*an, da);
        if (cn->requires_grad) add_grad(*cn, dc);
      },
      "pairwise_l2");
}

Tensor row_l2_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "row_l2_distance");
  require_matrix(a, "row_l2_distance");
  const int B = a.dim(0), D = a.dim(1);
  std::vector<float> out(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) {
    double acc = kDistEps;
    for (int d = 0; d < D; ++d) {
      const double diff = static_cast<double>(a.at(i, d)) - static_cast<double>(b.at(i, d));
      acc += diff * diff;
    }
    out[static_cast<std::size_t>(i)] = static_cast<float>(std::sqrt(acc));
  }
  auto an = a.node(), bn = b.node();
  return make_node(
      {B}, std::move(out), {an, bn},
      [an, bn, B, D](Node& self) {
        std::vector<double> da, db;
        if (an->requires_grad) da.assign(static_cast<std::size_t>(B) * D, 0.0);
        if (bn->requires_grad) db.assign(static_cast<std::size_t>(B) * D, 0.0);
        for (int i = 0; i < B; ++i) {
          const double g = static_cast<double>(self.grad[static_cast<std::size_t>(i)]) /
                           static_cast<double>(self.value[static_cast<std::size_t>(i)]);
          if (g == 0.0) continue;
          for (int d = 0; d < D; ++d) {
            const std::size_t k = static_cast<std::size_t>(i) * D + d;
            const double diff = static_cast<double>(an->value[k]) -
                                static_cast<double>(bn->value[k]);
            if (an->requires_grad) da[k] += g * diff;
            if (bn->requires_grad) db[k] -= g * diff;
          }
        }
        if (an->requires_grad) add_grad(*an, da);
        if (bn->requires_grad) add_grad(*bn, db);
      },
      "row_l2_distance");
}

// ---- shape ops -------------------------------------------------------------

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  require_matrix(x, "gather_rows");
  const int N = x.dim(0), D = x.dim(1);
  const int B = static_cast<int>(idx.size());
  check(B > 0, "gather_rows: empty index list");
  for (int i : idx) check(i >= 0 && i < N, "gather_rows: row index out of range");
  std::vector<float> out(static_cast<std::size_t>(B) * D);
  for (int i = 0; i < B; ++i) {
    const int r = idx[static_cast<std::size_t>(i)];
    std::copy_n(x.data().begin() + static_cast<std::size_t>(r) * D, D,
                out.begin() + static_cast<std::size_t>(i) * D);
  }
  auto xn = x.node();
  return make_node(
      {B, D}, std::move(out), {xn},
      [xn, idx, D](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          const std::size_t r = static_cast<std::size_t>(idx[i]);
          for (int d = 0; d < D; ++d) {
            xn->grad[r * D + d] += self.grad[i * D + d];
          }
        }
      },
      "gather_rows");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  check(!parts.empty(), "concat_cols: no inputs");
  const int B = parts[0].dim(0);
  int total = 0;
  std::vector<int> widths;
  std::vector<NodePtr> nodes;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols");
    check(p.dim(0) == B, "concat_cols: row counts must match");
    widths.push_back(p.dim(1));
    total += p.dim(1);
    nodes.push_back(p.node());
  }
  std::vector<float> out(static_cast<std::size_t>(B) * total);
  int off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const int w = widths[pi];
    for (int i = 0; i < B; ++i) {
      std::copy_n(parts[pi].data().begin() + static_cast<std::size_t>(i) * w, w,
                  out.begin() + static_cast<std::size_t>(i) * total + off);
    }
    off += w;
  }
  return make_node(
      {B, total}, std::move(out), nodes,
      [nodes, widths, B, total](Node& self) {
        int off2 = 0;
        for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
          const int w = widths[pi];
          if (nodes[pi]->requires_grad) {
            nodes[pi]->ensure_grad();
            for (int i = 0; i < B; ++i) {
              for (int d = 0; d < w; ++d) {
                nodes[pi]->grad[static_cast<std::size_t>(i) * w + d] +=
                    self.grad[static_cast<std::size_t>(i) * total + off2 + d];
              }
            }
          }
          off2 += w;
        }
      },
      "concat_cols");
}

Tensor pad_cols(const Tensor& x, int out_cols) {
  require_matrix(x, "pad_cols");
  const int B = x.dim(0), W = x.dim(1);
  check(out_cols >= W, "pad_cols: target width smaller than input");
  if (out_cols == W) return x;
  std::vector<float> out(static_cast<std::size_t>(B) * out_cols, 0.0f);
  for (int i = 0; i < B; ++i) {
    std::copy_n(x.data().begin() + static_cast<std::size_t>(i) * W, W,
                out.begin() + static_cast<std::size_t>(i) * out_cols);
  }
  auto xn = x.node();
  return make_node(
      {B, out_cols}, std::move(out), {xn},
      [xn, B, W, out_cols](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int i = 0; i < B; ++i) {
          for (int d = 0; d < W; ++d) {
            xn->grad[static_cast<std::size_t>(i) * W + d] +=
                self.grad[static_cast<std::size_t>(i) * out_cols + d];
          }
        }
      },
      "pad_cols");
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_matrix(x, "l2_normalize_rows");
  const int B = x.dim(0), D = x.dim(1);
  std::vector<float> out(static_cast<std::size_t>(B) * D);
  std::vector<double> norms(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) {
    double acc = 0.0;
    for (int d = 0; d < D; ++d) {
      const double v = static_cast<double>(x.at(i, d));
      acc += v * v;
    }
    const double n = std::max(std::sqrt(acc), 1e-12);
    norms[static_cast<std::size_t>(i)] = n;
    for (int d = 0; d < D; ++d) {
      out[static_cast<std::size_t>(i) * D + d] =
          static_cast<float>(static_cast<double>(x.at(i, d)) / n);
    }
  }
  auto xn = x.node();
  return make_node(
      {B, D}, std::move(out), {xn},
      [xn, norms = std::move(norms), B, D](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int i = 0; i < B; ++i) {
          double dot = 0.0;
          for (int d = 0; d < D; ++d) {
            const std::size_t k = static_cast<std::size_t>(i) * D + d;
            dot += static_cast<double>(self.grad[k]) * static_cast<double>(self.value[k]);
          }
          const double n = norms[static_cast<std::size_t>(i)];
          for (int d = 0; d < D; ++d) {
            const std::size_t k = static_cast<std::size_t>(i) * D + d;
            xn->grad[k] += static_cast<float>(
                (static_cast<double>(self.grad[k]) -
                 static_cast<double>(self.value[k]) * dot) / n);
          }
        }
      },
      "l2_normalize_rows");
}

// ---- reductions ------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
  check(x.defined(), "sum_all: undefined tensor");
  double acc = 0.0;
  for (int i = 0; i < x.size(); ++i) acc += static_cast<double>(x.at(i));
  auto xn = x.node();
  return make_node(
      {1}, {static_cast<float>(acc)}, {xn},
      [xn](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (float& g : xn->grad) g += self.grad[0];
      },
      "sum_all");
}

Tensor mean_all(const Tensor& x) {
  check(x.defined() && x.size() > 0, "mean_all: undefined tensor");
  const int n = x.size();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += static_cast<double>(x.at(i));
  acc /= n;
  auto xn = x.node();
  return make_node(
      {1}, {static_cast<float>(acc)}, {xn},
      [xn, n](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const float g = self.grad[0] / static_cast<float>(n);
        for (float& gi : xn->grad) gi += g;
      },
      "mean_all");
}

}  // namespace meb::num
