#pragma once

// Dense float32 tensors with reverse-mode differentiation.
//
// Values and gradients are stored as 32-bit floats; every reduction
// (matmul inner products, softmax denominators, sums) accumulates in
// double before rounding back to float. Ops record onto the innermost
// active GradTape; GradTape::backward replays the records in exact
// reverse order of recording. A tensor that never participates in the
// loss keeps an exactly-zero gradient.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "meb/common.hpp"

namespace meb::num {

using Shape = std::vector<int>;

int shape_size(const Shape& s);

namespace detail {
struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // accumulates into parents' grads

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int size() const { return static_cast<int>(node_->value.size()); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::span<const float> data() const { return node_->value; }
  // Direct mutation is reserved for parameter owners (optimizer, EMA,
  // head resets); never mutate a tensor that is part of a live graph.
  std::span<float> mutable_data() { return node_->value; }

  float at(int i) const { return node_->value[static_cast<std::size_t>(i)]; }
  float at(int r, int c) const {
    return node_->value[static_cast<std::size_t>(r) *
                            static_cast<std::size_t>(node_->shape[1]) +
                        static_cast<std::size_t>(c)];
  }
  float item() const;

  // Gradient view; all zeros when nothing has been accumulated.
  std::vector<float> grad() const;
  std::span<const float> grad_raw() const { return node_->grad; }
  void zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), 0.0f);
  }

  // Value copy detached from any graph (requires_grad = false).
  Tensor detach() const;
  // Deep copy preserving requires_grad.
  Tensor clone() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of differentiable operations. Activates on construction,
// deactivates on destruction (tapes nest like scopes).
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  // Seeds d(root)/d(root) = 1 and replays the tape in reverse recording
  // order. root must have exactly one element. One backward per tape.
  void backward(const Tensor& root);

  std::size_t num_ops() const { return records_.size(); }

 private:
  friend void record_op(const std::shared_ptr<detail::Node>& n);
  std::vector<std::shared_ptr<detail::Node>> records_;
  bool used_ = false;
  GradTape* prev_ = nullptr;
};

// ---- primitives ----------------------------------------------------------

// out[i,j] = sum_k x[i,k] * w[k,j] + b[j]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, float c);
Tensor add_scalar(const Tensor& x, float c);
Tensor neg(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor tanh_act(const Tensor& x);
Tensor log_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor clamp(const Tensor& x, float lo, float hi);

// Row-wise stable softmax / log-softmax over the last dim of a [B,C] tensor.
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// out[i,j] = sqrt(sum_d (a[i,d]-c[j,d])^2 + 1e-12)
Tensor pairwise_l2(const Tensor& a, const Tensor& c);
// out[i] = sqrt(sum_d (a[i,d]-b[i,d])^2 + 1e-12); a,b same shape [B,D]
Tensor row_l2_distance(const Tensor& a, const Tensor& b);

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor pad_cols(const Tensor& x, int out_cols);
Tensor l2_normalize_rows(const Tensor& x);

Tensor sum_all(const Tensor& x);   // -> shape {1}
Tensor mean_all(const Tensor& x);  // -> shape {1}

}  // namespace meb::num
