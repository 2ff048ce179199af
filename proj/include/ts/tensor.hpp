#pragma once

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "ts/common.hpp"

namespace ts {

namespace detail {

inline void gemm(bool ta, bool tb, int m, int n, int k, const float* a, int lda,
                 const float* b, int ldb, float* c, int ldc, float beta) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a, lda, b, ldb,
              beta, c, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, const double* a, int lda,
                 const double* b, int ldb, double* c, int ldc, double beta) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, lda, b, ldb,
              beta, c, ldc);
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily during backward
  bool requires_grad = false;  // leaf parameter flag
  bool needs_grad = false;     // requires_grad or any parent needs it
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

// Value-semantic handle to a node in the dynamic tape. Tensors are immutable
// once produced by an op; only the optimizer touches mutable_data() between
// graphs.
template <typename T>
class Tensor {
public:
  using NodeT = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return from(std::move(shape), {}, false);
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    auto n = std::make_shared<NodeT>();
    long long count = numel(shape);
    for (int e : shape)
      if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    if (data.empty()) data.assign(static_cast<size_t>(count), T(0));
    if (static_cast<long long>(data.size()) != count)
      throw DimensionError("data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  long long size() const { return static_cast<long long>(node_->value.size()); }
  const std::vector<T>& data() const { return node_->value; }
  std::vector<T>& mutable_data() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  bool needs_grad() const { return node_->needs_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const { return node_->grad; }
  std::vector<T>& mutable_grad() { node_->ensure_grad(); return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  bool all_finite() const {
    for (T v : node_->value)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::shared_ptr<NodeT> node() const { return node_; }

  // --- op construction helpers ---
  static Tensor make_op(Shape shape, std::vector<T> value,
                        std::vector<Tensor> inputs) {
    Tensor t = from(std::move(shape), std::move(value));
    for (auto& in : inputs) {
      t.node_->parents.push_back(in.node_);
      if (in.node_->needs_grad) t.node_->needs_grad = true;
    }
    return t;
  }

  void set_backward(std::function<void()> fn) {
    if (node_->needs_grad) node_->backward_fn = std::move(fn);
  }

private:
  std::shared_ptr<NodeT> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

template <typename T>
void add_into(const std::shared_ptr<Node<T>>& n, const T* src, size_t count, T scale = T(1)) {
  if (!n->needs_grad) return;
  n->ensure_grad();
  T* g = n->grad.data();
  for (size_t i = 0; i < count; ++i) g[i] += scale * src[i];
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Gradients from multiple consumers
// accumulate by addition; requires_grad leaves keep their grads until
// zero_grad().
template <typename T>
void backward(Tensor<T> loss) {
  if (loss.size() != 1)
    throw DimensionError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
  using NodeT = detail::Node<T>;
  std::vector<std::shared_ptr<NodeT>> topo;
  std::unordered_set<NodeT*> seen;
  // iterative post-order DFS over parents
  std::vector<std::pair<std::shared_ptr<NodeT>, size_t>> stack;
  stack.push_back({loss.node(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      auto p = node->parents[idx++];
      if (seen.insert(p.get()).second) stack.push_back({p, 0});
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    auto& n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn();
  }
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<T> out(static_cast<size_t>(m) * n);
  detail::gemm(false, false, m, n, k, a.data().data(), k, b.data().data(), n,
               out.data(), n, T(0));
  auto t = Tensor<T>::make_op({m, n}, std::move(out), {a, b});
  auto on = t.node(); auto an = a.node(); auto bn = b.node();
  t.set_backward([on, an, bn, m, n, k]() {
    const T* g = on->grad.data();
    if (an->needs_grad) {
      an->ensure_grad();
      // dA += dC * B^T
      detail::gemm(false, true, m, k, n, g, n, bn->value.data(), n,
                   an->grad.data(), k, T(1));
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      // dB += A^T * dC
      detail::gemm(true, false, k, n, m, an->value.data(), k, g, n,
                   bn->grad.data(), n, T(1));
    }
  });
  return t;
}

// y = x W^T + b with W stored [out x in]; x is [N x in] or [in].
template <typename T>
Tensor<T> linear(Tensor<T> x, Tensor<T> w, Tensor<T> b) {
  bool vec = x.shape().size() == 1;
  int in = vec ? x.shape()[0] : x.shape()[1];
  int rows = vec ? 1 : x.shape()[0];
  if (w.shape().size() != 2 || w.shape()[1] != in || b.shape().size() != 1 ||
      b.shape()[0] != w.shape()[0])
    throw DimensionError("linear shape mismatch: x " + shape_str(x.shape()) + ", w " +
                         shape_str(w.shape()) + ", b " + shape_str(b.shape()));
  int out = w.shape()[0];
  std::vector<T> y(static_cast<size_t>(rows) * out);
  detail::gemm(false, true, rows, out, in, x.data().data(), in, w.data().data(),
               in, y.data(), out, T(0));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < out; ++c) y[static_cast<size_t>(r) * out + c] += b.data()[c];
  Shape oshape = vec ? Shape{out} : Shape{rows, out};
  auto t = Tensor<T>::make_op(std::move(oshape), std::move(y), {x, w, b});
  auto on = t.node(); auto xn = x.node(); auto wn = w.node(); auto bn = b.node();
  t.set_backward([on, xn, wn, bn, rows, in, out]() {
    const T* g = on->grad.data();
    if (xn->needs_grad) {
      xn->ensure_grad();
      detail::gemm(false, false, rows, in, out, g, out, wn->value.data(), in,
                   xn->grad.data(), in, T(1));
    }
    if (wn->needs_grad) {
      wn->ensure_grad();
      detail::gemm(true, false, out, in, rows, g, out, xn->value.data(), in,
                   wn->grad.data(), in, T(1));
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < out; ++c) bn->grad[c] += g[static_cast<size_t>(r) * out + c];
    }
  });
  return t;
}

namespace detail {

// x: [C x H x W] sample, col: [C*kh*kw x OH*OW]
template <typename T>
void im2col(const T* x, int c_in, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, T* col) {
  for (int c = 0; c < c_in; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = col + (static_cast<size_t>(c) * kh * kw + ki * kw + kj) *
                           (static_cast<size_t>(oh) * ow);
        for (int i = 0; i < oh; ++i) {
          int ih = i * stride - pad + ki;
          if (ih < 0 || ih >= h) {
            std::fill(row + static_cast<size_t>(i) * ow, row + static_cast<size_t>(i + 1) * ow, T(0));
            continue;
          }
          const T* src = x + (static_cast<size_t>(c) * h + ih) * w;
          for (int j = 0; j < ow; ++j) {
            int iw = j * stride - pad + kj;
            row[static_cast<size_t>(i) * ow + j] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

// scatter-add transpose of im2col
template <typename T>
void col2im(const T* col, int c_in, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, T* x) {
  for (int c = 0; c < c_in; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = col + (static_cast<size_t>(c) * kh * kw + ki * kw + kj) *
                                 (static_cast<size_t>(oh) * ow);
        for (int i = 0; i < oh; ++i) {
          int ih = i * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          T* dst = x + (static_cast<size_t>(c) * h + ih) * w;
          for (int j = 0; j < ow; ++j) {
            int iw = j * stride - pad + kj;
            if (iw >= 0 && iw < w) dst[iw] += row[static_cast<size_t>(i) * ow + j];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Cross-correlation conv. x: [C_in x H x W] or [N x C_in x H x W],
// w: [C_out x C_in x kh x kw], b: [C_out].
template <typename T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> b, int stride = 1, int padding = 0) {
  const Shape& xs = x.shape();
  bool batched = xs.size() == 4;
  if (!batched && xs.size() != 3)
    throw DimensionError("conv2d input must be rank 3 or 4, got " + shape_str(xs));
  int n = batched ? xs[0] : 1;
  int c_in = xs[batched ? 1 : 0], h = xs[batched ? 2 : 1], wd = xs[batched ? 3 : 2];
  if (w.shape().size() != 4 || w.shape()[1] != c_in)
    throw DimensionError("conv2d weight " + shape_str(w.shape()) +
                         " incompatible with input " + shape_str(xs));
  int c_out = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  if (b.shape().size() != 1 || b.shape()[0] != c_out)
    throw DimensionError("conv2d bias " + shape_str(b.shape()) + " must be [" +
                         std::to_string(c_out) + "]");
  if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
  int oh = (h + 2 * padding - kh) / stride + 1;
  int ow = (wd + 2 * padding - kw) / stride + 1;
  if (kh > h + 2 * padding || kw > wd + 2 * padding || oh <= 0 || ow <= 0)
    throw DimensionError("conv2d non-positive output extent for input " + shape_str(xs) +
                         " kernel " + shape_str(w.shape()));
  int k = c_in * kh * kw, p = oh * ow;
  size_t sample_in = static_cast<size_t>(c_in) * h * wd;
  size_t sample_out = static_cast<size_t>(c_out) * p;
  std::vector<T> out(static_cast<size_t>(n) * sample_out);
  std::vector<T> col(static_cast<size_t>(k) * p);
  for (int s = 0; s < n; ++s) {
    detail::im2col(x.data().data() + s * sample_in, c_in, h, wd, kh, kw, stride,
                   padding, oh, ow, col.data());
    detail::gemm(false, false, c_out, p, k, w.data().data(), k, col.data(), p,
                 out.data() + s * sample_out, p, T(0));
    T* o = out.data() + s * sample_out;
    for (int c = 0; c < c_out; ++c) {
      T bias = b.data()[c];
      for (int i = 0; i < p; ++i) o[static_cast<size_t>(c) * p + i] += bias;
    }
  }
  Shape oshape = batched ? Shape{n, c_out, oh, ow} : Shape{c_out, oh, ow};
  auto t = Tensor<T>::make_op(std::move(oshape), std::move(out), {x, w, b});
  auto on = t.node(); auto xn = x.node(); auto wn = w.node(); auto bn = b.node();
  t.set_backward([on, xn, wn, bn, n, c_in, h, wd, c_out, kh, kw, stride, padding,
                  oh, ow, k, p, sample_in, sample_out]() {
    const T* g = on->grad.data();
    std::vector<T> col(static_cast<size_t>(k) * p);
    std::vector<T> dcol;
    if (xn->needs_grad) {
      xn->ensure_grad();
      dcol.resize(static_cast<size_t>(k) * p);
    }
    if (wn->needs_grad) wn->ensure_grad();
    if (bn->needs_grad) bn->ensure_grad();
    for (int s = 0; s < n; ++s) {
      const T* gs = g + s * sample_out;
      if (wn->needs_grad) {
        detail::im2col(xn->value.data() + s * sample_in, c_in, h, wd, kh, kw,
                       stride, padding, oh, ow, col.data());
        // dW += dOut * col^T
        detail::gemm(false, true, c_out, k, p, gs, p, col.data(), p,
                     wn->grad.data(), k, T(1));
      }
      if (xn->needs_grad) {
        // dcol = W^T * dOut, scattered back to dx
        detail::gemm(true, false, k, p, c_out, wn->value.data(), k, gs, p,
                     dcol.data(), p, T(0));
        detail::col2im(dcol.data(), c_in, h, wd, kh, kw, stride, padding, oh, ow,
                       xn->grad.data() + s * sample_in);
      }
      if (bn->needs_grad) {
        for (int c = 0; c < c_out; ++c) {
          T acc = T(0);
          for (int i = 0; i < p; ++i) acc += gs[static_cast<size_t>(c) * p + i];
          bn->grad[c] += acc;
        }
      }
    }
  });
  return t;
}

// 2x2 max pool, stride 2. Ties route the gradient to the first element in
// row-major window order.
template <typename T>
Tensor<T> maxpool2(Tensor<T> x) {
  const Shape& xs = x.shape();
  bool batched = xs.size() == 4;
  if (!batched && xs.size() != 3)
    throw DimensionError("maxpool2 input must be rank 3 or 4, got " + shape_str(xs));
  int n = batched ? xs[0] : 1;
  int c = xs[batched ? 1 : 0], h = xs[batched ? 2 : 1], w = xs[batched ? 3 : 2];
  if (h % 2 || w % 2)
    throw DimensionError("maxpool2 requires even extents, got " + shape_str(xs));
  int oh = h / 2, ow = w / 2;
  size_t total = static_cast<size_t>(n) * c * oh * ow;
  std::vector<T> out(total);
  auto argmax = std::make_shared<std::vector<int32_t>>(total);
  const T* in = x.data().data();
  size_t plane = static_cast<size_t>(h) * w;
  size_t oplane = static_cast<size_t>(oh) * ow;
  for (int nc = 0; nc < n * c; ++nc) {
    const T* src = in + nc * plane;
    T* dst = out.data() + nc * oplane;
    int32_t* am = argmax->data() + nc * oplane;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        int base = 2 * i * w + 2 * j;
        int idx[4] = {base, base + 1, base + w, base + w + 1};
        int best = idx[0];
        T bv = src[idx[0]];
        for (int t2 = 1; t2 < 4; ++t2)
          if (src[idx[t2]] > bv) { bv = src[idx[t2]]; best = idx[t2]; }
        dst[static_cast<size_t>(i) * ow + j] = bv;
        am[static_cast<size_t>(i) * ow + j] = best;
      }
    }
  }
  Shape oshape = batched ? Shape{n, c, oh, ow} : Shape{c, oh, ow};
  auto t = Tensor<T>::make_op(std::move(oshape), std::move(out), {x});
  auto on = t.node(); auto xn = x.node();
  t.set_backward([on, xn, argmax, n, c, plane, oplane]() {
    if (!xn->needs_grad) return;
    xn->ensure_grad();
    const T* g = on->grad.data();
    for (int nc = 0; nc < n * c; ++nc) {
      T* dx = xn->grad.data() + nc * plane;
      const int32_t* am = argmax->data() + nc * oplane;
      const T* gs = g + nc * oplane;
      for (size_t i = 0; i < oplane; ++i) dx[am[i]] += gs[i];
    }
  });
  return t;
}

template <typename T>
Tensor<T> relu(Tensor<T> x) {
  std::vector<T> out(x.data());
  for (T& v : out) v = v > T(0) ? v : T(0);
  auto t = Tensor<T>::make_op(x.shape(), std::move(out), {x});
  auto on = t.node(); auto xn = x.node();
  t.set_backward([on, xn]() {
    if (!xn->needs_grad) return;
    xn->ensure_grad();
    // subgradient at 0 is 0
    for (size_t i = 0; i < on->grad.size(); ++i)
      if (xn->value[i] > T(0)) xn->grad[i] += on->grad[i];
  });
  return t;
}

template <typename T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape())
    throw DimensionError("sub shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<T> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  auto t = Tensor<T>::make_op(a.shape(), std::move(out), {a, b});
  auto on = t.node(); auto an = a.node(); auto bn = b.node();
  t.set_backward([on, an, bn]() {
    detail::add_into(an, on->grad.data(), on->grad.size(), T(1));
    detail::add_into(bn, on->grad.data(), on->grad.size(), T(-1));
  });
  return t;
}

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape())
    throw DimensionError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<T> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  auto t = Tensor<T>::make_op(a.shape(), std::move(out), {a, b});
  auto on = t.node(); auto an = a.node(); auto bn = b.node();
  t.set_backward([on, an, bn]() {
    detail::add_into(an, on->grad.data(), on->grad.size(), T(1));
    detail::add_into(bn, on->grad.data(), on->grad.size(), T(1));
  });
  return t;
}

template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape())
    throw DimensionError("mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<T> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  auto t = Tensor<T>::make_op(a.shape(), std::move(out), {a, b});
  auto on = t.node(); auto an = a.node(); auto bn = b.node();
  t.set_backward([on, an, bn]() {
    if (an->needs_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
    }
  });
  return t;
}

template <typename T>
Tensor<T> scale(Tensor<T> a, T s) {
  std::vector<T> out(a.data());
  for (T& v : out) v *= s;
  auto t = Tensor<T>::make_op(a.shape(), std::move(out), {a});
  auto on = t.node(); auto an = a.node();
  t.set_backward([on, an, s]() { detail::add_into(an, on->grad.data(), on->grad.size(), s); });
  return t;
}

template <typename T>
Tensor<T> concat(Tensor<T> a, Tensor<T> b, int axis) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (axis < 0 || axis >= static_cast<int>(as.size()) || as.size() != bs.size())
    throw DimensionError("concat axis " + std::to_string(axis) + " invalid for " +
                         shape_str(as) + " / " + shape_str(bs));
  for (size_t i = 0; i < as.size(); ++i)
    if (static_cast<int>(i) != axis && as[i] != bs[i])
      throw DimensionError("concat shape mismatch: " + shape_str(as) + " vs " + shape_str(bs));
  size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= as[i];
  for (size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
  size_t awidth = static_cast<size_t>(as[axis]) * inner;
  size_t bwidth = static_cast<size_t>(bs[axis]) * inner;
  Shape oshape = as;
  oshape[axis] += bs[axis];
  std::vector<T> out(outer * (awidth + bwidth));
  for (size_t o = 0; o < outer; ++o) {
    std::copy_n(a.data().data() + o * awidth, awidth, out.data() + o * (awidth + bwidth));
    std::copy_n(b.data().data() + o * bwidth, bwidth, out.data() + o * (awidth + bwidth) + awidth);
  }
  auto t = Tensor<T>::make_op(std::move(oshape), std::move(out), {a, b});
  auto on = t.node(); auto an = a.node(); auto bn = b.node();
  t.set_backward([on, an, bn, outer, awidth, bwidth]() {
    const T* g = on->grad.data();
    if (an->needs_grad) {
      an->ensure_grad();
      for (size_t o = 0; o < outer; ++o)
        for (size_t i = 0; i < awidth; ++i) an->grad[o * awidth + i] += g[o * (awidth + bwidth) + i];
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (size_t o = 0; o < outer; ++o)
        for (size_t i = 0; i < bwidth; ++i)
          bn->grad[o * bwidth + i] += g[o * (awidth + bwidth) + awidth + i];
    }
  });
  return t;
}

template <typename T>
Tensor<T> reshape(Tensor<T> x, Shape shape) {
  if (numel(shape) != x.size())
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
  auto t = Tensor<T>::make_op(std::move(shape), std::vector<T>(x.data()), {x});
  auto on = t.node(); auto xn = x.node();
  t.set_backward([on, xn]() { detail::add_into(xn, on->grad.data(), on->grad.size()); });
  return t;
}

template <typename T>
Tensor<T> sum(Tensor<T> x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  auto t = Tensor<T>::make_op({1}, {acc}, {x});
  auto on = t.node(); auto xn = x.node();
  t.set_backward([on, xn]() {
    if (!xn->needs_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[0];
  });
  return t;
}

template <typename T>
Tensor<T> mean(Tensor<T> x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  T inv = T(1) / static_cast<T>(x.size());
  auto t = Tensor<T>::make_op({1}, {acc * inv}, {x});
  auto on = t.node(); auto xn = x.node();
  t.set_backward([on, xn, inv]() {
    if (!xn->needs_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[0] * inv;
  });
  return t;
}

template <typename T>
Tensor<T> l2norm_sq(Tensor<T> x) {
  T acc = T(0);
  for (T v : x.data()) acc += v * v;
  auto t = Tensor<T>::make_op({1}, {acc}, {x});
  auto on = t.node(); auto xn = x.node();
  t.set_backward([on, xn]() {
    if (!xn->needs_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < xn->grad.size(); ++i)
      xn->grad[i] += T(2) * xn->value[i] * on->grad[0];
  });
  return t;
}

// Row-wise stable 2-way softmax over [2] or [N x 2].
template <typename T>
Tensor<T> softmax2(Tensor<T> x) {
  const Shape& xs = x.shape();
  bool vec = xs.size() == 1;
  bool ok = (vec && xs[0] == 2) || (xs.size() == 2 && xs[1] == 2);
  if (!ok) throw DimensionError("softmax2 expects [2] or [N x 2], got " + shape_str(xs));
  int n = vec ? 1 : xs[0];
  std::vector<T> out(static_cast<size_t>(n) * 2);
  for (int r = 0; r < n; ++r) {
    T a = x.data()[2 * r], b = x.data()[2 * r + 1];
    T m = std::max(a, b);
    T ea = std::exp(a - m), eb = std::exp(b - m);
    T z = ea + eb;
    out[2 * r] = ea / z;
    out[2 * r + 1] = eb / z;
  }
  auto t = Tensor<T>::make_op(xs, std::move(out), {x});
  auto on = t.node(); auto xn = x.node();
  t.set_backward([on, xn, n]() {
    if (!xn->needs_grad) return;
    xn->ensure_grad();
    for (int r = 0; r < n; ++r) {
      T s0 = on->value[2 * r], s1 = on->value[2 * r + 1];
      T g0 = on->grad[2 * r], g1 = on->grad[2 * r + 1];
      T dot = g0 * s0 + g1 * s1;
      xn->grad[2 * r] += s0 * (g0 - dot);
      xn->grad[2 * r + 1] += s1 * (g1 - dot);
    }
  });
  return t;
}

}  // namespace ts
