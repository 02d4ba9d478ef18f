#include "agis/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace agis {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                Tensor::shape_str(a.shape()) + " vs " +
                                Tensor::shape_str(b.shape()));
}

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backward_op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_op = std::move(backward_op);
  }
  return n;
}

// Elementwise op with value fn and derivative fn (as a function of input value).
template <typename F, typename DF>
Var unary_elem(const Var& x, F f, DF df) {
  Tensor out(x.shape());
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = f(x.value()[i]);
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, df](Node& n) {
    Tensor g(xp->value.shape());
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = n.grad[i] * df(xp->value[i]);
    xp->accumulate(g);
  }));
}

}  // namespace

void backward(const Var& loss) {
  if (loss.value().size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  // Post-order DFS (iterative) to get a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<NodePtr, size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      NodePtr child = node->parents[next_child++];
      if (child->requires_grad && !visited.count(child.get())) {
        visited.insert(child.get());
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node.get());
      stack.pop_back();
    }
  }
  loss.node()->accumulate(Tensor::scalar(1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad_ready && n->backward_op) n->backward_op(*n);
  }
}

// ---------------- elementwise / reductions ----------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape(), a.value().data() + b.value().data());
  auto ap = a.node(), bp = b.node();
  return Var(make_node(std::move(out), {ap, bp}, [ap, bp](Node& n) {
    ap->accumulate(n.grad);
    bp->accumulate(n.grad);
  }));
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.shape(), a.value().data() - b.value().data());
  auto ap = a.node(), bp = b.node();
  return Var(make_node(std::move(out), {ap, bp}, [ap, bp](Node& n) {
    ap->accumulate(n.grad);
    Tensor g(n.grad.shape(), -n.grad.data());
    bp->accumulate(g);
  }));
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape(), a.value().data() * b.value().data());
  auto ap = a.node(), bp = b.node();
  return Var(make_node(std::move(out), {ap, bp}, [ap, bp](Node& n) {
    ap->accumulate(Tensor(n.grad.shape(), n.grad.data() * bp->value.data()));
    bp->accumulate(Tensor(n.grad.shape(), n.grad.data() * ap->value.data()));
  }));
}

Var affine(const Var& x, Scalar a, Scalar b) {
  Tensor out(x.shape(), a * x.value().data() + b);
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, a](Node& n) {
    xp->accumulate(Tensor(n.grad.shape(), a * n.grad.data()));
  }));
}

Var relu(const Var& x) {
  return unary_elem(
      x, [](Scalar v) { return v > 0 ? v : 0; },
      [](Scalar v) { return v > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, Scalar slope) {
  return unary_elem(
      x, [slope](Scalar v) { return v > 0 ? v : slope * v; },
      [slope](Scalar v) { return v > 0 ? 1.0 : slope; });
}

Var tanh_act(const Var& x) {
  return unary_elem(
      x, [](Scalar v) { return std::tanh(v); },
      [](Scalar v) { Scalar t = std::tanh(v); return 1.0 - t * t; });
}

Var exp_elem(const Var& x) {
  return unary_elem(
      x, [](Scalar v) { return std::exp(v); },
      [](Scalar v) { return std::exp(v); });
}

Var log_elem(const Var& x) {
  return unary_elem(
      x, [](Scalar v) { return std::log(v); },
      [](Scalar v) { return 1.0 / v; });
}

Var abs_elem(const Var& x) {
  return unary_elem(
      x, [](Scalar v) { return std::abs(v); },
      [](Scalar v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var sum_all(const Var& x) {
  Tensor out = Tensor::scalar(x.value().data().sum());
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp](Node& n) {
    xp->accumulate(Tensor::constant(xp->value.shape(), n.grad[0]));
  }));
}

Var mean_all(const Var& x) {
  Scalar inv = 1.0 / static_cast<Scalar>(x.value().size());
  Tensor out = Tensor::scalar(x.value().data().sum() * inv);
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, inv](Node& n) {
    xp->accumulate(Tensor::constant(xp->value.shape(), n.grad[0] * inv));
  }));
}

Var sigmoid_ce(const Var& logits, Scalar target) {
  // ce(l,t) = max(l,0) - l*t + log1p(exp(-|l|)); d/dl = sigmoid(l) - t
  return unary_elem(
      logits,
      [target](Scalar l) {
        return std::max(l, 0.0) - l * target + std::log1p(std::exp(-std::abs(l)));
      },
      [target](Scalar l) { return 1.0 / (1.0 + std::exp(-l)) - target; });
}

// ---------------- matrix ops ----------------

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: incompatible shapes");
  int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out({m, n});
  out.as_matrix(m, n) = a.value().as_matrix(m, k) * b.value().as_matrix(k, n);
  auto ap = a.node(), bp = b.node();
  return Var(make_node(std::move(out), {ap, bp}, [ap, bp, m, k, n](Node& nd) {
    auto g = nd.grad.as_matrix(m, n);
    if (ap->requires_grad) {
      Tensor ga({m, k});
      ga.as_matrix(m, k) = g * bp->value.as_matrix(k, n).transpose();
      ap->accumulate(ga);
    }
    if (bp->requires_grad) {
      Tensor gb({k, n});
      gb.as_matrix(k, n) = ap->value.as_matrix(m, k).transpose() * g;
      bp->accumulate(gb);
    }
  }));
}

Var transpose(const Var& a) {
  if (a.value().rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
  int r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r});
  out.as_matrix(c, r) = a.value().as_matrix(r, c).transpose();
  auto ap = a.node();
  return Var(make_node(std::move(out), {ap}, [ap, r, c](Node& n) {
    Tensor g({r, c});
    g.as_matrix(r, c) = n.grad.as_matrix(c, r).transpose();
    ap->accumulate(g);
  }));
}

Var rowwise_l2_normalize(const Var& x) {
  if (x.value().rank() != 2) throw std::invalid_argument("rowwise_l2_normalize: rank-2 only");
  int r = x.shape()[0], c = x.shape()[1];
  Tensor out({r, c});
  std::vector<Scalar> norms(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    Scalar s = 0;
    for (int j = 0; j < c; ++j) s += x.value().at2(i, j) * x.value().at2(i, j);
    Scalar nrm = std::sqrt(s);
    norms[static_cast<size_t>(i)] = nrm;
    if (nrm > 0)
      for (int j = 0; j < c; ++j) out.at2(i, j) = x.value().at2(i, j) / nrm;
  }
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, r, c, norms](Node& n) {
    Tensor g({r, c});
    for (int i = 0; i < r; ++i) {
      Scalar nrm = norms[static_cast<size_t>(i)];
      if (nrm == 0) continue;
      // d(x/|x|)/dx = (I - u u^T)/|x| with u = x/|x|
      Scalar dot = 0;
      for (int j = 0; j < c; ++j) dot += n.grad.at2(i, j) * xp->value.at2(i, j) / nrm;
      for (int j = 0; j < c; ++j)
        g.at2(i, j) = (n.grad.at2(i, j) - dot * xp->value.at2(i, j) / nrm) / nrm;
    }
    xp->accumulate(g);
  }));
}

Var rowwise_min(const Var& x) {
  int r = x.shape()[0], c = x.shape()[1];
  Tensor out({r, 1});
  std::vector<int> argmin(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (x.value().at2(i, j) < x.value().at2(i, best)) best = j;
    argmin[static_cast<size_t>(i)] = best;
    out.at2(i, 0) = x.value().at2(i, best);
  }
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, r, c, argmin](Node& n) {
    Tensor g({r, c});
    for (int i = 0; i < r; ++i) g.at2(i, argmin[static_cast<size_t>(i)]) = n.grad.at2(i, 0);
    xp->accumulate(g);
  }));
}

Var rowwise_sum(const Var& x) {
  int r = x.shape()[0], c = x.shape()[1];
  Tensor out({r, 1});
  for (int i = 0; i < r; ++i) {
    Scalar s = 0;
    for (int j = 0; j < c; ++j) s += x.value().at2(i, j);
    out.at2(i, 0) = s;
  }
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, r, c](Node& n) {
    Tensor g({r, c});
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) g.at2(i, j) = n.grad.at2(i, 0);
    xp->accumulate(g);
  }));
}

Var colwise_max(const Var& x) {
  int r = x.shape()[0], c = x.shape()[1];
  Tensor out({1, c});
  std::vector<int> argmax(static_cast<size_t>(c));
  for (int j = 0; j < c; ++j) {
    int best = 0;
    for (int i = 1; i < r; ++i)
      if (x.value().at2(i, j) > x.value().at2(best, j)) best = i;
    argmax[static_cast<size_t>(j)] = best;
    out.at2(0, j) = x.value().at2(best, j);
  }
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, r, c, argmax](Node& n) {
    Tensor g({r, c});
    for (int j = 0; j < c; ++j) g.at2(argmax[static_cast<size_t>(j)], j) = n.grad.at2(0, j);
    xp->accumulate(g);
  }));
}

Var div_colvec(const Var& m, const Var& v) {
  int r = m.shape()[0], c = m.shape()[1];
  if (v.shape()[0] != r || v.shape()[1] != 1)
    throw std::invalid_argument("div_colvec: divisor must be [R,1]");
  Tensor out({r, c});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at2(i, j) = m.value().at2(i, j) / v.value().at2(i, 0);
  auto mp = m.node(), vp = v.node();
  return Var(make_node(std::move(out), {mp, vp}, [mp, vp, r, c](Node& n) {
    if (mp->requires_grad) {
      Tensor g({r, c});
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) g.at2(i, j) = n.grad.at2(i, j) / vp->value.at2(i, 0);
      mp->accumulate(g);
    }
    if (vp->requires_grad) {
      Tensor g({r, 1});
      for (int i = 0; i < r; ++i) {
        Scalar s = 0, vi = vp->value.at2(i, 0);
        for (int j = 0; j < c; ++j) s += n.grad.at2(i, j) * mp->value.at2(i, j);
        g.at2(i, 0) = -s / (vi * vi);
      }
      vp->accumulate(g);
    }
  }));
}

// ---------------- shape / assembly ----------------

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
  int n = xs[0].shape()[0], h = xs[0].shape()[2], w = xs[0].shape()[3];
  int ctot = 0;
  for (const auto& x : xs) {
    if (x.value().rank() != 4 || x.shape()[0] != n || x.shape()[2] != h || x.shape()[3] != w)
      throw std::invalid_argument("concat_channels: incompatible shapes");
    ctot += x.shape()[1];
  }
  Tensor out({n, ctot, h, w});
  Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  int coff = 0;
  for (const auto& x : xs) {
    int cx = x.shape()[1];
    for (int b = 0; b < n; ++b)
      out.data().segment((static_cast<Eigen::Index>(b) * ctot + coff) * plane, cx * plane) =
          x.value().data().segment(static_cast<Eigen::Index>(b) * cx * plane, cx * plane);
    coff += cx;
  }
  std::vector<NodePtr> parents;
  parents.reserve(xs.size());
  for (const auto& x : xs) parents.push_back(x.node());
  return Var(make_node(std::move(out), parents, [parents, n, ctot, plane](Node& nd) {
    int coff = 0;
    for (const auto& p : parents) {
      int cx = p->value.shape()[1];
      if (p->requires_grad) {
        Tensor g(p->value.shape());
        for (int b = 0; b < n; ++b)
          g.data().segment(static_cast<Eigen::Index>(b) * cx * plane, cx * plane) =
              nd.grad.data().segment((static_cast<Eigen::Index>(b) * ctot + coff) * plane,
                                     cx * plane);
        p->accumulate(g);
      }
      coff += cx;
    }
  }));
}

Var concat_batch(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_batch: empty input");
  auto tail = xs[0].shape();
  int ntot = 0;
  for (const auto& x : xs) {
    auto s = x.shape();
    for (size_t i = 1; i < s.size(); ++i)
      if (s[i] != tail[i]) throw std::invalid_argument("concat_batch: incompatible shapes");
    ntot += s[0];
  }
  std::vector<int> oshape = tail;
  oshape[0] = ntot;
  Tensor out(oshape);
  Eigen::Index per = out.size() / ntot;
  Eigen::Index off = 0;
  for (const auto& x : xs) {
    out.data().segment(off, x.value().size()) = x.value().data();
    off += x.value().size();
  }
  std::vector<NodePtr> parents;
  for (const auto& x : xs) parents.push_back(x.node());
  return Var(make_node(std::move(out), parents, [parents, per](Node& nd) {
    Eigen::Index off = 0;
    for (const auto& p : parents) {
      Eigen::Index sz = p->value.size();
      if (p->requires_grad) {
        Tensor g(p->value.shape(), nd.grad.data().segment(off, sz));
        p->accumulate(g);
      }
      off += sz;
    }
    (void)per;
  }));
}

Var slice_channels(const Var& x, int c0, int c1) {
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (c0 < 0 || c1 > c || c0 >= c1) throw std::invalid_argument("slice_channels: bad range");
  Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  Tensor out({n, c1 - c0, h, w});
  for (int b = 0; b < n; ++b)
    out.data().segment(static_cast<Eigen::Index>(b) * (c1 - c0) * plane, (c1 - c0) * plane) =
        x.value().data().segment((static_cast<Eigen::Index>(b) * c + c0) * plane,
                                 (c1 - c0) * plane);
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, n, c, c0, c1, plane](Node& nd) {
    Tensor g(xp->value.shape());
    for (int b = 0; b < n; ++b)
      g.data().segment((static_cast<Eigen::Index>(b) * c + c0) * plane, (c1 - c0) * plane) =
          nd.grad.data().segment(static_cast<Eigen::Index>(b) * (c1 - c0) * plane,
                                 (c1 - c0) * plane);
    xp->accumulate(g);
  }));
}

Var batch_slice(const Var& x, int b) {
  auto s = x.shape();
  if (b < 0 || b >= s[0]) throw std::invalid_argument("batch_slice: index out of range");
  std::vector<int> oshape = s;
  oshape[0] = 1;
  Eigen::Index per = x.value().size() / s[0];
  Tensor out(oshape, x.value().data().segment(static_cast<Eigen::Index>(b) * per, per));
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, b, per](Node& nd) {
    Tensor g(xp->value.shape());
    g.data().segment(static_cast<Eigen::Index>(b) * per, per) = nd.grad.data();
    xp->accumulate(g);
  }));
}

Var crop(const Var& x, int h0, int w0, int ph, int pw) {
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (h0 < 0 || w0 < 0 || h0 + ph > h || w0 + pw > w)
    throw std::invalid_argument("crop: window out of bounds");
  Tensor out({n, c, ph, pw});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < ph; ++i)
        for (int j = 0; j < pw; ++j) out.at4(b, ch, i, j) = x.value().at4(b, ch, h0 + i, w0 + j);
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, n, c, h0, w0, ph, pw](Node& nd) {
    Tensor g(xp->value.shape());
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < ph; ++i)
          for (int j = 0; j < pw; ++j) g.at4(b, ch, h0 + i, w0 + j) = nd.grad.at4(b, ch, i, j);
    xp->accumulate(g);
  }));
}

Var replicate_channel(const Var& x, int times) {
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (c != 1) throw std::invalid_argument("replicate_channel: input must have 1 channel");
  std::vector<Var> parts(static_cast<size_t>(times), x);
  (void)n; (void)h; (void)w;
  return concat_channels(parts);
}

Var spatial_vectors(const Var& x) {
  if (x.value().rank() != 4 || x.shape()[0] != 1)
    throw std::invalid_argument("spatial_vectors: expects [1,C,H,W]");
  int c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor out({h * w, c});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) out.at2(i * w + j, ch) = x.value().at4(0, ch, i, j);
  auto xp = x.node();
  return Var(make_node(std::move(out), {xp}, [xp, c, h, w](Node& nd) {
    Tensor g(xp->value.shape());
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) g.at4(0, ch, i, j) = nd.grad.at2(i * w + j, ch);
    xp->accumulate(g);
  }));
}

// ---------------- convolution ----------------

namespace {

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Gather k*k patches of a [C,H,W] image into columns [C*k*k, Hout*Wout].
void im2col(const Scalar* img, int c, int h, int w, int k, int stride, int pad, RowMat& cols) {
  int hout = (h + 2 * pad - k) / stride + 1;
  int wout = (w + 2 * pad - k) / stride + 1;
  cols.setZero(c * k * k, hout * wout);
  for (int ch = 0; ch < c; ++ch)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        int row = (ch * k + kh) * k + kw;
        for (int oh = 0; oh < hout; ++oh) {
          int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= h) continue;
          for (int ow = 0; ow < wout; ++ow) {
            int iw = ow * stride - pad + kw;
            if (iw < 0 || iw >= w) continue;
            cols(row, oh * wout + ow) = img[(static_cast<Eigen::Index>(ch) * h + ih) * w + iw];
          }
        }
      }
}

// Scatter-add columns back into a [C,H,W] image (adjoint of im2col).
void col2im(const RowMat& cols, int c, int h, int w, int k, int stride, int pad, Scalar* img) {
  int hout = (h + 2 * pad - k) / stride + 1;
  int wout = (w + 2 * pad - k) / stride + 1;
  for (int ch = 0; ch < c; ++ch)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        int row = (ch * k + kh) * k + kw;
        for (int oh = 0; oh < hout; ++oh) {
          int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= h) continue;
          for (int ow = 0; ow < wout; ++ow) {
            int iw = ow * stride - pad + kw;
            if (iw < 0 || iw >= w) continue;
            img[(static_cast<Eigen::Index>(ch) * h + ih) * w + iw] += cols(row, oh * wout + ow);
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x.value().rank() != 4 || w.value().rank() != 4)
    throw std::invalid_argument("conv2d: rank-4 input and weight required");
  int n = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], ww = x.shape()[3];
  int cout = w.shape()[0], k = w.shape()[2];
  if (w.shape()[1] != cin)
    throw std::invalid_argument("conv2d: input channels " + std::to_string(cin) +
                                " do not match weight " + std::to_string(w.shape()[1]));
  int hout = (h + 2 * pad - k) / stride + 1;
  int wout = (ww + 2 * pad - k) / stride + 1;
  if (hout <= 0 || wout <= 0) throw std::invalid_argument("conv2d: output would be empty");

  Tensor out({n, cout, hout, wout});
  auto wmat = w.value().as_matrix(cout, cin * k * k);
  RowMat cols;
  for (int bn = 0; bn < n; ++bn) {
    im2col(x.value().raw() + static_cast<Eigen::Index>(bn) * cin * h * ww, cin, h, ww, k, stride,
           pad, cols);
    Eigen::Map<RowMat> y(out.raw() + static_cast<Eigen::Index>(bn) * cout * hout * wout, cout,
                         hout * wout);
    y.noalias() = wmat * cols;
    for (int co = 0; co < cout; ++co) y.row(co).array() += b.value()[co];
  }
  auto xp = x.node(), wp = w.node(), bp = b.node();
  return Var(make_node(std::move(out), {xp, wp, bp},
                       [xp, wp, bp, n, cin, h, ww, cout, k, stride, pad, hout, wout](Node& nd) {
    auto wmat = wp->value.as_matrix(cout, cin * k * k);
    Tensor gx, gw, gb;
    if (xp->requires_grad) gx = Tensor(xp->value.shape());
    if (wp->requires_grad) gw = Tensor(wp->value.shape());
    if (bp->requires_grad) gb = Tensor(bp->value.shape());
    RowMat cols, dcols;
    for (int bn = 0; bn < n; ++bn) {
      Eigen::Map<const RowMat> gy(nd.grad.raw() + static_cast<Eigen::Index>(bn) * cout * hout * wout,
                                  cout, hout * wout);
      if (wp->requires_grad || xp->requires_grad)
        im2col(xp->value.raw() + static_cast<Eigen::Index>(bn) * cin * h * ww, cin, h, ww, k,
               stride, pad, cols);
      if (wp->requires_grad)
        gw.as_matrix(cout, cin * k * k).noalias() += gy * cols.transpose();
      if (xp->requires_grad) {
        dcols.noalias() = wmat.transpose() * gy;
        col2im(dcols, cin, h, ww, k, stride, pad,
               gx.raw() + static_cast<Eigen::Index>(bn) * cin * h * ww);
      }
      if (bp->requires_grad)
        for (int co = 0; co < cout; ++co) gb[co] += gy.row(co).sum();
    }
    if (xp->requires_grad) xp->accumulate(gx);
    if (wp->requires_grad) wp->accumulate(gw);
    if (bp->requires_grad) bp->accumulate(gb);
  }));
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x.value().rank() != 4 || w.value().rank() != 4)
    throw std::invalid_argument("conv_transpose2d: rank-4 input and weight required");
  int n = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], ww = x.shape()[3];
  int cout = w.shape()[1], k = w.shape()[2];
  if (w.shape()[0] != cin)
    throw std::invalid_argument("conv_transpose2d: channel mismatch");
  int hout = (h - 1) * stride - 2 * pad + k;
  int wout = (ww - 1) * stride - 2 * pad + k;
  if (hout <= 0 || wout <= 0) throw std::invalid_argument("conv_transpose2d: output would be empty");

  Tensor out({n, cout, hout, wout});
  auto wmat = w.value().as_matrix(cin, cout * k * k);
  RowMat cols;
  for (int bn = 0; bn < n; ++bn) {
    Eigen::Map<const RowMat> xin(x.value().raw() + static_cast<Eigen::Index>(bn) * cin * h * ww,
                                 cin, h * ww);
    cols.noalias() = wmat.transpose() * xin;
    col2im(cols, cout, hout, wout, k, stride, pad,
           out.raw() + static_cast<Eigen::Index>(bn) * cout * hout * wout);
    Eigen::Map<RowMat> y(out.raw() + static_cast<Eigen::Index>(bn) * cout * hout * wout, cout,
                         hout * wout);
    for (int co = 0; co < cout; ++co) y.row(co).array() += b.value()[co];
  }
  auto xp = x.node(), wp = w.node(), bp = b.node();
  return Var(make_node(std::move(out), {xp, wp, bp},
                       [xp, wp, bp, n, cin, h, ww, cout, k, stride, pad, hout, wout](Node& nd) {
    auto wmat = wp->value.as_matrix(cin, cout * k * k);
    Tensor gx, gw, gb;
    if (xp->requires_grad) gx = Tensor(xp->value.shape());
    if (wp->requires_grad) gw = Tensor(wp->value.shape());
    if (bp->requires_grad) gb = Tensor(bp->value.shape());
    RowMat gycols;
    for (int bn = 0; bn < n; ++bn) {
      Eigen::Map<const RowMat> gy(nd.grad.raw() + static_cast<Eigen::Index>(bn) * cout * hout * wout,
                                  cout, hout * wout);
      if (xp->requires_grad || wp->requires_grad)
        im2col(nd.grad.raw() + static_cast<Eigen::Index>(bn) * cout * hout * wout, cout, hout,
               wout, k, stride, pad, gycols);
      if (xp->requires_grad) {
        Eigen::Map<RowMat> gxm(gx.raw() + static_cast<Eigen::Index>(bn) * cin * h * ww, cin,
                               h * ww);
        gxm.noalias() += wmat * gycols;
      }
      if (wp->requires_grad) {
        Eigen::Map<const RowMat> xin(xp->value.raw() + static_cast<Eigen::Index>(bn) * cin * h * ww,
                                     cin, h * ww);
        gw.as_matrix(cin, cout * k * k).noalias() += xin * gycols.transpose();
      }
      if (bp->requires_grad)
        for (int co = 0; co < cout; ++co) gb[co] += gy.row(co).sum();
    }
    if (xp->requires_grad) xp->accumulate(gx);
    if (wp->requires_grad) wp->accumulate(gw);
    if (bp->requires_grad) bp->accumulate(gb);
  }));
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps) {
  int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (gamma.value().size() != c || beta.value().size() != c)
    throw std::invalid_argument("instance_norm: affine parameter size mismatch");
  Eigen::Index m = static_cast<Eigen::Index>(h) * w;
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  std::vector<Scalar> inv_std(static_cast<size_t>(n) * c);
  for (int bn = 0; bn < n; ++bn)
    for (int ch = 0; ch < c; ++ch) {
      Eigen::Index off = (static_cast<Eigen::Index>(bn) * c + ch) * m;
      auto seg = x.value().data().segment(off, m);
      Scalar mu = seg.mean();
      Scalar var = (seg - mu).square().mean();
      Scalar is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(bn) * c + ch] = is;
      xhat.data().segment(off, m) = (seg - mu) * is;
      out.data().segment(off, m) =
          xhat.data().segment(off, m) * gamma.value()[ch] + beta.value()[ch];
    }
  auto xp = x.node(), gp = gamma.node(), bp = beta.node();
  auto xhat_p = std::make_shared<Tensor>(std::move(xhat));
  return Var(make_node(std::move(out), {xp, gp, bp},
                       [xp, gp, bp, n, c, m, inv_std, xhat_p](Node& nd) {
    Tensor gg, gb;
    if (gp->requires_grad) gg = Tensor(gp->value.shape());
    if (bp->requires_grad) gb = Tensor(bp->value.shape());
    Tensor gx;
    if (xp->requires_grad) gx = Tensor(xp->value.shape());
    for (int bn = 0; bn < n; ++bn)
      for (int ch = 0; ch < c; ++ch) {
        Eigen::Index off = (static_cast<Eigen::Index>(bn) * c + ch) * m;
        auto dy = nd.grad.data().segment(off, m);
        auto xh = xhat_p->data().segment(off, m);
        if (gp->requires_grad) gg[ch] += (dy * xh).sum();
        if (bp->requires_grad) gb[ch] += dy.sum();
        if (xp->requires_grad) {
          Scalar g = gp->value[ch];
          Scalar is = inv_std[static_cast<size_t>(bn) * c + ch];
          Scalar sum_dy = dy.sum();
          Scalar sum_dy_xh = (dy * xh).sum();
          gx.data().segment(off, m) =
              (g * is / static_cast<Scalar>(m)) *
              (static_cast<Scalar>(m) * dy - sum_dy - xh * sum_dy_xh);
        }
      }
    if (xp->requires_grad) xp->accumulate(gx);
    if (gp->requires_grad) gp->accumulate(gg);
    if (bp->requires_grad) bp->accumulate(gb);
  }));
}

}  // namespace agis
