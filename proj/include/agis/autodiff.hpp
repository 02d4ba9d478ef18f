#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "agis/tensor.hpp"

namespace agis {

// Reverse-mode autodiff on Tensor. The graph is define-by-run: every op
// allocates a Node pointing at its parents and carrying a backward closure.
// backward(loss) topologically sorts the reachable subgraph and pulls
// gradients from the loss down to every node with requires_grad set.

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_op;

  void accumulate(const Tensor& g) {
    if (!requires_grad) return;
    if (!grad_ready) {
      grad = Tensor::zeros(value.shape());
      grad_ready = true;
    }
    grad.data() += g.data();
  }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}
  Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return node_ && node_->grad_ready; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  NodePtr node() const { return node_; }

  const std::vector<int>& shape() const { return node_->value.shape(); }
  Scalar item() const { return node_->value.item(); }

  /// Constant copy cut off from the graph.
  Var detach() const { return Var(node_->value, false); }

  void set_requires_grad(bool v) { node_->requires_grad = v; }

  void zero_grad() {
    node_->grad_ready = false;
    node_->grad = Tensor();
  }

 private:
  NodePtr node_;
};

/// Backpropagate from a scalar loss (seeds d(loss)/d(loss) = 1).
void backward(const Var& loss);

// ---- elementwise / reduction ops ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// a*x + b, elementwise with scalars a and b.
Var affine(const Var& x, Scalar a, Scalar b);
Var relu(const Var& x);
Var leaky_relu(const Var& x, Scalar slope);
Var tanh_act(const Var& x);
Var exp_elem(const Var& x);
Var log_elem(const Var& x);
Var abs_elem(const Var& x);
Var mean_all(const Var& x);
Var sum_all(const Var& x);
/// Numerically stable sigmoid cross-entropy against a constant target in {0,1},
/// computed per element; combine with mean_all for the usual E[·] losses.
Var sigmoid_ce(const Var& logits, Scalar target);

// ---- matrix ops (rank-2 tensors) ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Rows scaled to unit L2 norm; all-zero rows stay zero (their gradient is zero).
Var rowwise_l2_normalize(const Var& x);
Var rowwise_min(const Var& x);   // [R,C] -> [R,1], subgradient to the argmin
Var rowwise_sum(const Var& x);   // [R,C] -> [R,1]
Var colwise_max(const Var& x);   // [R,C] -> [1,C], subgradient to the argmax
/// M_ij / v_i with v of shape [R,1].
Var div_colvec(const Var& m, const Var& v);

// ---- shape / assembly ops ----
Var concat_channels(const std::vector<Var>& xs);          // along dim 1 of [N,C,H,W]
Var concat_batch(const std::vector<Var>& xs);             // along dim 0
Var slice_channels(const Var& x, int c0, int c1);
Var batch_slice(const Var& x, int b);                     // [N,...] -> [1,...]
Var crop(const Var& x, int h0, int w0, int ph, int pw);   // spatial crop of [N,C,H,W]
Var replicate_channel(const Var& x, int times);           // [N,1,H,W] -> [N,times,H,W]
/// [1,C,H,W] -> [H*W, C]: one feature vector per spatial position.
Var spatial_vectors(const Var& x);

// ---- neural-net ops ----
/// x [N,Cin,H,W], w [Cout,Cin,k,k], b [Cout].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// x [N,Cin,H,W], w [Cin,Cout,k,k], b [Cout]; Hout = (H-1)*stride - 2*pad + k.
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// Per-sample per-channel normalization with affine parameters gamma, beta [C].
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps = 1e-5);

}  // namespace agis
