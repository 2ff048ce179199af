#pragma once

#include <optional>
#include <string>

#include "ts/layers.hpp"
#include "ts/losses.hpp"

namespace ts {

enum class VariantKind {
  S,            // one shared tower, one metric network
  PS,           // two distinct towers, one metric network
  TSNet,        // Siamese + Pseudo-Siamese streams, FC fusion after FC3
  SStar,        // widened Siamese matched to TS-Net's parameter count
  FusionFC1,    // streams fused by subtraction after the metric FC1
  FusionFC2,    // ... after the metric FC2
  FusionTower,  // ... directly after the feature towers
};

enum class LossMode { OneEntropy, ThreeEntropy };

inline const char* variant_name(VariantKind k) {
  switch (k) {
    case VariantKind::S: return "S";
    case VariantKind::PS: return "PS";
    case VariantKind::TSNet: return "TSNet";
    case VariantKind::SStar: return "SStar";
    case VariantKind::FusionFC1: return "TSNetFusionFC1";
    case VariantKind::FusionFC2: return "TSNetFusionFC2";
    case VariantKind::FusionTower: return "TSNetFusionTower";
  }
  return "?";
}

inline VariantKind variant_from_name(const std::string& s) {
  for (VariantKind k : {VariantKind::S, VariantKind::PS, VariantKind::TSNet,
                        VariantKind::SStar, VariantKind::FusionFC1,
                        VariantKind::FusionFC2, VariantKind::FusionTower})
    if (s == variant_name(k)) return k;
  throw ConfigError("unknown model.kind '" + s + "'");
}

inline const char* loss_mode_name(LossMode m) {
  return m == LossMode::OneEntropy ? "OneEntropy" : "ThreeEntropy";
}

inline LossMode loss_mode_from_name(const std::string& s) {
  if (s == "OneEntropy") return LossMode::OneEntropy;
  if (s == "ThreeEntropy") return LossMode::ThreeEntropy;
  throw ConfigError("unknown model.loss_mode '" + s + "'");
}

struct LossWeights {
  double lambda = 1e-2;
  double beta = 1e-2;
  double q = 50.0;
  bool normalize_features = false;

  void validate() const {
    if (lambda < 0 || lambda > 1) throw ConfigError("loss.lambda must be in [0,1]");
    if (beta < 0 || beta > 1) throw ConfigError("loss.beta must be in [0,1]");
    if (!(q > 0)) throw ConfigError("loss.q must be > 0");
  }
};

// Per-pair (or per-batch) network outputs. Optional tensors are populated
// exactly per variant kind; check defined().
template <typename T>
struct ForwardOutputs {
  Tensor<T> logits_final;
  Tensor<T> logits_siam;
  Tensor<T> logits_pseudo;
  Tensor<T> feat_siam_a, feat_siam_b;
  Tensor<T> feat_pseudo_a, feat_pseudo_b;
};

template <typename T>
struct LossBreakdown {
  Tensor<T> total;
  Tensor<T> tsnet_en, siam_en, pseudo_en, siam_con, pseudo_con;
};

// Closed-form parameter counts for the S* width search (no allocation).
namespace detail {

inline long long tower_param_count(double width_mult, double bottleneck_mult) {
  int c1 = scaled_channels(24, width_mult);
  int c2 = scaled_channels(64, width_mult);
  int c3 = scaled_channels(96, width_mult);
  int c4 = scaled_channels(96, width_mult);
  int c5 = scaled_channels(64, width_mult);
  int bdim = static_cast<int>(std::lround(128 * bottleneck_mult));
  long long n = 0;
  n += static_cast<long long>(c1) * 1 * 49 + c1;
  n += static_cast<long long>(c2) * c1 * 25 + c2;
  n += static_cast<long long>(c3) * c2 * 9 + c3;
  n += static_cast<long long>(c4) * c3 * 9 + c4;
  n += static_cast<long long>(c5) * c4 * 9 + c5;
  n += static_cast<long long>(bdim) * c5 * 64 + bdim;
  return n;
}

inline long long metric_param_count(int in, int hidden) {
  return static_cast<long long>(hidden) * in + hidden +
         static_cast<long long>(hidden) * hidden + hidden +
         2LL * hidden + 2;
}

inline long long tsnet_param_count(int hidden) {
  return 3 * tower_param_count(1.0, 1.0) + 2 * metric_param_count(128, hidden) + (4 * 2 + 2);
}

}  // namespace detail

inline constexpr double kSStarPaperWidth = 1.45;
inline constexpr double kSStarBottleneckMult = 2.0;
inline constexpr double kSStarBudgetTol = 0.02;

// Width multiplier for the parameter-matched Siamese baseline. The cited 1.45
// factor is tried first; if it misses the +-2% budget with this tower, the
// multiplier is tuned by scanning.
inline double sstar_width_multiplier(int hidden = 512) {
  long long target = detail::tsnet_param_count(hidden);
  auto total = [&](double w) {
    int bdim = static_cast<int>(std::lround(128 * kSStarBottleneckMult));
    return detail::tower_param_count(w, kSStarBottleneckMult) +
           detail::metric_param_count(bdim, hidden);
  };
  auto ratio = [&](double w) { return static_cast<double>(total(w)) / static_cast<double>(target); };
  if (std::fabs(ratio(kSStarPaperWidth) - 1.0) <= kSStarBudgetTol) return kSStarPaperWidth;
  double best_w = kSStarPaperWidth, best_err = 1e9;
  for (double w = 1.0; w <= 3.0; w += 0.001) {
    double e = std::fabs(ratio(w) - 1.0);
    if (e < best_err) { best_err = e; best_w = w; }
  }
  return best_w;
}

// A configured network graph for one of the evaluable variants. All variants
// accept the same (x1, x2) interface; inputs may carry a leading batch dim.
template <typename T>
struct Model {
  VariantKind kind = VariantKind::S;
  LossMode loss_mode = LossMode::OneEntropy;
  double width_mult = 1.0;
  double bottleneck_mult = 1.0;
  int metric_hidden = MetricNetwork<T>::kHidden;

  std::optional<FeatureTower<T>> tower_shared;          // S / SStar / Siamese stream
  std::optional<FeatureTower<T>> tower_a, tower_b;      // Pseudo-Siamese stream
  std::optional<MetricNetwork<T>> metric_siam, metric_pseudo;
  std::optional<MetricNetwork<T>> metric_fused;         // FusionTower tail
  std::optional<FCLayer<T>> fusion;                     // TSNet 4->2 head
  // fusion-at-FC1/FC2 pieces: per-stream prefixes (OneEntropy) and fused tail
  std::optional<FCLayer<T>> pre_fc1_siam, pre_fc1_pseudo;
  std::optional<FCLayer<T>> pre_fc2_siam, pre_fc2_pseudo;
  std::optional<FCLayer<T>> tail_fc2, tail_fc3;

  static Model create(VariantKind kind, LossMode mode, Rng& rng,
                      int hidden = MetricNetwork<T>::kHidden) {
    Model m;
    m.kind = kind;
    m.loss_mode = mode;
    m.metric_hidden = hidden;
    bool tsnet_kind = kind != VariantKind::S && kind != VariantKind::PS && kind != VariantKind::SStar;
    if (!tsnet_kind) m.loss_mode = LossMode::OneEntropy;
    if (kind == VariantKind::FusionTower && mode == LossMode::ThreeEntropy)
      throw ConfigError("ThreeEntropy is not defined for tower-level fusion");
    switch (kind) {
      case VariantKind::S:
        m.tower_shared = FeatureTower<T>::create(rng);
        m.metric_siam = MetricNetwork<T>::create(rng, 128, hidden);
        break;
      case VariantKind::PS:
        m.tower_a = FeatureTower<T>::create(rng);
        m.tower_b = FeatureTower<T>::create(rng);
        m.metric_pseudo = MetricNetwork<T>::create(rng, 128, hidden);
        break;
      case VariantKind::SStar: {
        m.width_mult = sstar_width_multiplier(hidden);
        m.bottleneck_mult = kSStarBottleneckMult;
        m.tower_shared = FeatureTower<T>::create(rng, m.width_mult, m.bottleneck_mult);
        m.metric_siam = MetricNetwork<T>::create(rng, m.tower_shared->output_dim(), hidden);
        break;
      }
      case VariantKind::TSNet:
        m.tower_shared = FeatureTower<T>::create(rng);
        m.metric_siam = MetricNetwork<T>::create(rng, 128, hidden);
        m.tower_a = FeatureTower<T>::create(rng);
        m.tower_b = FeatureTower<T>::create(rng);
        m.metric_pseudo = MetricNetwork<T>::create(rng, 128, hidden);
        m.fusion = FCLayer<T>::create(2, 4, rng);
        break;
      case VariantKind::FusionTower:
        m.tower_shared = FeatureTower<T>::create(rng);
        m.tower_a = FeatureTower<T>::create(rng);
        m.tower_b = FeatureTower<T>::create(rng);
        m.metric_fused = MetricNetwork<T>::create(rng, 128, hidden);
        break;
      case VariantKind::FusionFC1:
        m.tower_shared = FeatureTower<T>::create(rng);
        m.tower_a = FeatureTower<T>::create(rng);
        m.tower_b = FeatureTower<T>::create(rng);
        if (m.loss_mode == LossMode::ThreeEntropy) {
          m.metric_siam = MetricNetwork<T>::create(rng, 128, hidden);
          m.metric_pseudo = MetricNetwork<T>::create(rng, 128, hidden);
        } else {
          m.pre_fc1_siam = FCLayer<T>::create(hidden, 128, rng);
          m.pre_fc1_pseudo = FCLayer<T>::create(hidden, 128, rng);
        }
        m.tail_fc2 = FCLayer<T>::create(hidden, hidden, rng);
        m.tail_fc3 = FCLayer<T>::create(2, hidden, rng);
        break;
      case VariantKind::FusionFC2:
        m.tower_shared = FeatureTower<T>::create(rng);
        m.tower_a = FeatureTower<T>::create(rng);
        m.tower_b = FeatureTower<T>::create(rng);
        if (m.loss_mode == LossMode::ThreeEntropy) {
          m.metric_siam = MetricNetwork<T>::create(rng, 128, hidden);
          m.metric_pseudo = MetricNetwork<T>::create(rng, 128, hidden);
        } else {
          m.pre_fc1_siam = FCLayer<T>::create(hidden, 128, rng);
          m.pre_fc1_pseudo = FCLayer<T>::create(hidden, 128, rng);
          m.pre_fc2_siam = FCLayer<T>::create(hidden, hidden, rng);
          m.pre_fc2_pseudo = FCLayer<T>::create(hidden, hidden, rng);
        }
        m.tail_fc3 = FCLayer<T>::create(2, hidden, rng);
        break;
    }
    return m;
  }

  ForwardOutputs<T> forward(Tensor<T> x1, Tensor<T> x2) const {
    ForwardOutputs<T> out;
    switch (kind) {
      case VariantKind::S:
      case VariantKind::SStar: {
        out.feat_siam_a = tower_shared->forward(x1);
        out.feat_siam_b = tower_shared->forward(x2);
        out.logits_final = metric_siam->forward(sub(out.feat_siam_a, out.feat_siam_b));
        break;
      }
      case VariantKind::PS: {
        out.feat_pseudo_a = tower_a->forward(x1);
        out.feat_pseudo_b = tower_b->forward(x2);
        out.logits_final = metric_pseudo->forward(sub(out.feat_pseudo_a, out.feat_pseudo_b));
        break;
      }
      case VariantKind::TSNet: {
        out.feat_siam_a = tower_shared->forward(x1);
        out.feat_siam_b = tower_shared->forward(x2);
        out.logits_siam = metric_siam->forward(sub(out.feat_siam_a, out.feat_siam_b));
        out.feat_pseudo_a = tower_a->forward(x1);
        out.feat_pseudo_b = tower_b->forward(x2);
        out.logits_pseudo = metric_pseudo->forward(sub(out.feat_pseudo_a, out.feat_pseudo_b));
        // fusion consumes pre-softmax logits of both streams
        int axis = static_cast<int>(out.logits_siam.shape().size()) - 1;
        out.logits_final = fusion->forward(concat(out.logits_siam, out.logits_pseudo, axis));
        break;
      }
      case VariantKind::FusionTower: {
        Tensor<T> fs = stream_feat_diff(out, x1, x2);
        Tensor<T> fp = pseudo_feat_diff(out, x1, x2);
        out.logits_final = metric_fused->forward(sub(fs, fp));
        break;
      }
      case VariantKind::FusionFC1: {
        Tensor<T> fs = stream_feat_diff(out, x1, x2);
        Tensor<T> fp = pseudo_feat_diff(out, x1, x2);
        Tensor<T> h1s, h1p;
        if (loss_mode == LossMode::ThreeEntropy) {
          h1s = metric_siam->fc1_out(fs);
          h1p = metric_pseudo->fc1_out(fp);
          out.logits_siam = metric_siam->tail_from_fc1(h1s);
          out.logits_pseudo = metric_pseudo->tail_from_fc1(h1p);
        } else {
          h1s = pre_fc1_siam->forward(fs);
          h1p = pre_fc1_pseudo->forward(fp);
        }
        Tensor<T> h = sub(h1s, h1p);
        out.logits_final = tail_fc3->forward(relu(tail_fc2->forward(relu(h))));
        break;
      }
      case VariantKind::FusionFC2: {
        Tensor<T> fs = stream_feat_diff(out, x1, x2);
        Tensor<T> fp = pseudo_feat_diff(out, x1, x2);
        Tensor<T> h2s, h2p;
        if (loss_mode == LossMode::ThreeEntropy) {
          Tensor<T> h1s = metric_siam->fc1_out(fs);
          Tensor<T> h1p = metric_pseudo->fc1_out(fp);
          h2s = metric_siam->fc2_out(h1s);
          h2p = metric_pseudo->fc2_out(h1p);
          out.logits_siam = metric_siam->tail_from_fc2(h2s);
          out.logits_pseudo = metric_pseudo->tail_from_fc2(h2p);
        } else {
          h2s = pre_fc2_siam->forward(relu(pre_fc1_siam->forward(fs)));
          h2p = pre_fc2_pseudo->forward(relu(pre_fc1_pseudo->forward(fp)));
        }
        out.logits_final = tail_fc3->forward(relu(sub(h2s, h2p)));
        break;
      }
    }
    return out;
  }

  NamedParams<T> params() {
    NamedParams<T> p;
    if (tower_shared) tower_shared->collect("tower_shared", p);
    if (tower_a) tower_a->collect("tower_a", p);
    if (tower_b) tower_b->collect("tower_b", p);
    if (metric_siam) metric_siam->collect("metric_siam", p);
    if (metric_pseudo) metric_pseudo->collect("metric_pseudo", p);
    if (metric_fused) metric_fused->collect("metric_fused", p);
    if (fusion) fusion->collect("fusion", p);
    if (pre_fc1_siam) pre_fc1_siam->collect("pre_fc1_siam", p);
    if (pre_fc1_pseudo) pre_fc1_pseudo->collect("pre_fc1_pseudo", p);
    if (pre_fc2_siam) pre_fc2_siam->collect("pre_fc2_siam", p);
    if (pre_fc2_pseudo) pre_fc2_pseudo->collect("pre_fc2_pseudo", p);
    if (tail_fc2) tail_fc2->collect("tail_fc2", p);
    if (tail_fc3) tail_fc3->collect("tail_fc3", p);
    return p;
  }

private:
  Tensor<T> stream_feat_diff(ForwardOutputs<T>& out, Tensor<T> x1, Tensor<T> x2) const {
    out.feat_siam_a = tower_shared->forward(x1);
    out.feat_siam_b = tower_shared->forward(x2);
    return sub(out.feat_siam_a, out.feat_siam_b);
  }
  Tensor<T> pseudo_feat_diff(ForwardOutputs<T>& out, Tensor<T> x1, Tensor<T> x2) const {
    out.feat_pseudo_a = tower_a->forward(x1);
    out.feat_pseudo_b = tower_b->forward(x2);
    return sub(out.feat_pseudo_a, out.feat_pseudo_b);
  }
};

// Weighted objective:
//   total = tsnet_en + siam_en + pseudo_en + lambda*siam_con + beta*pseudo_con
// with absent terms contributing zero. Entropy terms follow the variant and
// loss mode; contrastive terms are attached whenever the corresponding stream
// features exist and the weight is nonzero.
template <typename T>
LossBreakdown<T> combined_loss(const ForwardOutputs<T>& out, const std::vector<int>& labels,
                               const LossWeights& w, VariantKind kind, LossMode mode) {
  w.validate();
  LossBreakdown<T> lb;
  auto con_term = [&](Tensor<T> fa, Tensor<T> fb) {
    if (w.normalize_features) {
      fa = l2_normalize_rows(fa);
      fb = l2_normalize_rows(fb);
    }
    return contrastive(fa, fb, labels, static_cast<T>(w.q));
  };
  switch (kind) {
    case VariantKind::S:
    case VariantKind::SStar: {
      lb.siam_en = cross_entropy(out.logits_final, labels);
      lb.total = lb.siam_en;
      if (w.lambda > 0) {
        lb.siam_con = con_term(out.feat_siam_a, out.feat_siam_b);
        lb.total = add(lb.total, scale(lb.siam_con, static_cast<T>(w.lambda)));
      }
      break;
    }
    case VariantKind::PS: {
      lb.pseudo_en = cross_entropy(out.logits_final, labels);
      lb.total = lb.pseudo_en;
      if (w.beta > 0) {
        lb.pseudo_con = con_term(out.feat_pseudo_a, out.feat_pseudo_b);
        lb.total = add(lb.total, scale(lb.pseudo_con, static_cast<T>(w.beta)));
      }
      break;
    }
    default: {
      if (!out.logits_final.defined())
        throw DimensionError("combined_loss: missing final logits for variant");
      lb.tsnet_en = cross_entropy(out.logits_final, labels);
      lb.total = lb.tsnet_en;
      if (mode == LossMode::ThreeEntropy) {
        if (!out.logits_siam.defined() || !out.logits_pseudo.defined())
          throw DimensionError("combined_loss: ThreeEntropy requires per-stream logits");
        lb.siam_en = cross_entropy(out.logits_siam, labels);
        lb.pseudo_en = cross_entropy(out.logits_pseudo, labels);
        lb.total = add(add(lb.total, lb.siam_en), lb.pseudo_en);
      }
      if (w.lambda > 0 && out.feat_siam_a.defined()) {
        lb.siam_con = con_term(out.feat_siam_a, out.feat_siam_b);
        lb.total = add(lb.total, scale(lb.siam_con, static_cast<T>(w.lambda)));
      }
      if (w.beta > 0 && out.feat_pseudo_a.defined()) {
        lb.pseudo_con = con_term(out.feat_pseudo_a, out.feat_pseudo_b);
        lb.total = add(lb.total, scale(lb.pseudo_con, static_cast<T>(w.beta)));
      }
      break;
    }
  }
  return lb;
}

}  // namespace ts
