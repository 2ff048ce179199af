#pragma once

#include <cmath>
#include <vector>

#include "ts/tensor.hpp"

namespace ts {

// Probability clamp keeping log() finite at saturated logits.
inline constexpr double kProbClamp = 1e-7;
// Decay constant of the negative-pair term.
inline constexpr double kConDecay = 2.77;
// Guard for d|f1-f2|/df at coincident features.
inline constexpr double kDistEps = 1e-12;

// Binary cross-entropy on 2-class logits. logits: [2] or [N x 2], labels in
// {0,1}, one per row. Returns the batch mean. The positive-class probability
// is clamped to [1e-7, 1-1e-7]; a clamped row contributes zero gradient.
template <typename T>
Tensor<T> cross_entropy(Tensor<T> logits, const std::vector<int>& labels) {
  const Shape& ls = logits.shape();
  bool vec = ls.size() == 1;
  bool ok = (vec && ls[0] == 2) || (ls.size() == 2 && ls[1] == 2);
  if (!ok) throw DimensionError("cross_entropy expects logits [2] or [N x 2], got " + shape_str(ls));
  int n = vec ? 1 : ls[0];
  if (static_cast<int>(labels.size()) != n)
    throw DimensionError("cross_entropy got " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  for (int y : labels)
    if (y != 0 && y != 1)
      throw DimensionError("cross_entropy label must be 0 or 1, got " + std::to_string(y));
  const T lo = static_cast<T>(kProbClamp), hi = static_cast<T>(1.0 - kProbClamp);
  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
  auto clamped = std::make_shared<std::vector<char>>(static_cast<size_t>(n));
  T acc = T(0);
  for (int r = 0; r < n; ++r) {
    T a = logits.data()[2 * r], b = logits.data()[2 * r + 1];
    T m = std::max(a, b);
    T ea = std::exp(a - m), eb = std::exp(b - m);
    T p1 = eb / (ea + eb);
    (*clamped)[r] = p1 < lo || p1 > hi;
    p1 = std::min(hi, std::max(lo, p1));
    (*probs)[r] = p1;
    acc += labels[r] ? -std::log(p1) : -std::log(T(1) - p1);
  }
  T inv = T(1) / static_cast<T>(n);
  auto t = Tensor<T>::make_op({1}, {acc * inv}, {logits});
  auto on = t.node(); auto ln = logits.node();
  auto lab = std::make_shared<std::vector<int>>(labels);
  t.set_backward([on, ln, probs, clamped, lab, n, inv]() {
    if (!ln->needs_grad) return;
    ln->ensure_grad();
    T g = on->grad[0] * inv;
    for (int r = 0; r < n; ++r) {
      if ((*clamped)[r]) continue;
      T p1 = (*probs)[r];
      // loss_r = -log softmax(logits_r)[y]; d/dlogits = p - onehot(y)
      T d1 = p1 - static_cast<T>((*lab)[r]);
      ln->grad[2 * r] += g * (-d1);
      ln->grad[2 * r + 1] += g * d1;
    }
  });
  return t;
}

// Feature-level contrastive loss:
//   y * (2/Q) D^2 + (1-y) * 2Q * exp(-2.77 D / Q),  D = ||f1 - f2||_2.
// f1/f2: [d] or [N x d]; returns the batch mean.
template <typename T>
Tensor<T> contrastive(Tensor<T> f1, Tensor<T> f2, const std::vector<int>& labels, T q) {
  if (!(q > T(0))) throw DimensionError("contrastive margin Q must be > 0");
  if (f1.shape() != f2.shape())
    throw DimensionError("contrastive feature shape mismatch: " + shape_str(f1.shape()) +
                         " vs " + shape_str(f2.shape()));
  const Shape& fs = f1.shape();
  bool vec = fs.size() == 1;
  if (!vec && fs.size() != 2)
    throw DimensionError("contrastive expects [d] or [N x d], got " + shape_str(fs));
  int n = vec ? 1 : fs[0];
  int d = vec ? fs[0] : fs[1];
  if (static_cast<int>(labels.size()) != n)
    throw DimensionError("contrastive got " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  for (int y : labels)
    if (y != 0 && y != 1)
      throw DimensionError("contrastive label must be 0 or 1, got " + std::to_string(y));
  auto dist = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
  T acc = T(0);
  for (int r = 0; r < n; ++r) {
    T dsq = T(0);
    for (int i = 0; i < d; ++i) {
      T diff = f1.data()[static_cast<size_t>(r) * d + i] - f2.data()[static_cast<size_t>(r) * d + i];
      dsq += diff * diff;
    }
    T dd = std::sqrt(dsq);
    (*dist)[r] = dd;
    if (labels[r])
      acc += (T(2) / q) * dsq;
    else
      acc += T(2) * q * std::exp(static_cast<T>(-kConDecay) / q * dd);
  }
  T inv = T(1) / static_cast<T>(n);
  auto t = Tensor<T>::make_op({1}, {acc * inv}, {f1, f2});
  auto on = t.node(); auto an = f1.node(); auto bn = f2.node();
  auto lab = std::make_shared<std::vector<int>>(labels);
  t.set_backward([on, an, bn, dist, lab, n, d, q, inv]() {
    if (!an->needs_grad && !bn->needs_grad) return;
    if (an->needs_grad) an->ensure_grad();
    if (bn->needs_grad) bn->ensure_grad();
    T g = on->grad[0] * inv;
    for (int r = 0; r < n; ++r) {
      T coeff;
      if ((*lab)[r]) {
        // d/df1 [(2/Q) D^2] = (4/Q) (f1-f2); no division by D needed
        coeff = g * T(4) / q;
      } else {
        T dd = (*dist)[r];
        T expo = std::exp(static_cast<T>(-kConDecay) / q * dd);
        // d/df1 [2Q e^{-2.77 D/Q}] = -2*2.77 e^{...} * (f1-f2)/D
        coeff = g * T(-2) * static_cast<T>(kConDecay) * expo /
                std::max(dd, static_cast<T>(kDistEps));
      }
      for (int i = 0; i < d; ++i) {
        size_t idx = static_cast<size_t>(r) * d + i;
        T diff = an->value[idx] - bn->value[idx];
        if (an->needs_grad) an->grad[idx] += coeff * diff;
        if (bn->needs_grad) bn->grad[idx] -= coeff * diff;
      }
    }
  });
  return t;
}

// L2-normalize feature rows (optional pre-processing before the contrastive
// loss, off by default).
template <typename T>
Tensor<T> l2_normalize_rows(Tensor<T> f) {
  const Shape& fs = f.shape();
  bool vec = fs.size() == 1;
  if (!vec && fs.size() != 2)
    throw DimensionError("l2_normalize_rows expects [d] or [N x d], got " + shape_str(fs));
  int n = vec ? 1 : fs[0];
  int d = vec ? fs[0] : fs[1];
  auto norms = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
  std::vector<T> out(f.data());
  for (int r = 0; r < n; ++r) {
    T sq = T(0);
    for (int i = 0; i < d; ++i) sq += out[static_cast<size_t>(r) * d + i] * out[static_cast<size_t>(r) * d + i];
    T nm = std::max(std::sqrt(sq), static_cast<T>(1e-12));
    (*norms)[r] = nm;
    for (int i = 0; i < d; ++i) out[static_cast<size_t>(r) * d + i] /= nm;
  }
  auto t = Tensor<T>::make_op(fs, std::move(out), {f});
  auto on = t.node(); auto fn = f.node();
  t.set_backward([on, fn, norms, n, d]() {
    if (!fn->needs_grad) return;
    fn->ensure_grad();
    for (int r = 0; r < n; ++r) {
      T nm = (*norms)[r];
      T dot = T(0);
      for (int i = 0; i < d; ++i) {
        size_t idx = static_cast<size_t>(r) * d + i;
        dot += on->grad[idx] * on->value[idx];
      }
      for (int i = 0; i < d; ++i) {
        size_t idx = static_cast<size_t>(r) * d + i;
        fn->grad[idx] += (on->grad[idx] - dot * on->value[idx]) / nm;
      }
    }
  });
  return t;
}

}  // namespace ts
