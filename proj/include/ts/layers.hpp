#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ts/rng.hpp"
#include "ts/tensor.hpp"

namespace ts {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

inline constexpr double kFcInitStddev = 0.005;
inline constexpr double kBiasInit = 0.1;

// Uniform in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
// For conv shapes [C_out x C_in x kh x kw] the fans include the kernel area.
template <typename T>
Tensor<T> init_xavier(const Shape& shape, Rng& rng) {
  if (shape.size() < 2)
    throw DimensionError("init_xavier needs >= 2 extents, got " + shape_str(shape));
  long long fan_in, fan_out;
  if (shape.size() == 2) {
    fan_out = shape[0];
    fan_in = shape[1];
  } else {
    long long kernel = 1;
    for (size_t i = 2; i < shape.size(); ++i) kernel *= shape[i];
    fan_in = shape[1] * kernel;
    fan_out = shape[0] * kernel;
  }
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> data(static_cast<size_t>(numel(shape)));
  for (T& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from(shape, std::move(data), true);
}

// Truncated normal: mean 0, stddev 0.005, values beyond 2 stddev resampled.
template <typename T>
Tensor<T> init_truncated_normal(const Shape& shape, Rng& rng) {
  std::vector<T> data(static_cast<size_t>(numel(shape)));
  for (T& v : data) v = static_cast<T>(rng.truncated_normal(kFcInitStddev));
  return Tensor<T>::from(shape, std::move(data), true);
}

template <typename T>
Tensor<T> init_const(const Shape& shape, T value) {
  std::vector<T> data(static_cast<size_t>(numel(shape)), value);
  return Tensor<T>::from(shape, std::move(data), true);
}

template <typename T>
struct ConvLayer {
  Tensor<T> weights;  // [C_out x C_in x k x k]
  Tensor<T> bias;     // [C_out]
  int stride = 1;
  int padding = 0;

  static ConvLayer create(int c_out, int c_in, int k, int padding, Rng& rng) {
    ConvLayer l;
    l.weights = init_xavier<T>({c_out, c_in, k, k}, rng);
    l.bias = init_const<T>({c_out}, static_cast<T>(kBiasInit));
    l.stride = 1;
    l.padding = padding;
    return l;
  }

  Tensor<T> forward(Tensor<T> x) const { return conv2d(x, weights, bias, stride, padding); }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.push_back({prefix + ".w", weights});
    out.push_back({prefix + ".b", bias});
  }
};

template <typename T>
struct FCLayer {
  Tensor<T> weights;  // [out x in]
  Tensor<T> bias;     // [out]

  static FCLayer create(int out, int in, Rng& rng) {
    FCLayer l;
    l.weights = init_truncated_normal<T>({out, in}, rng);
    l.bias = init_const<T>({out}, static_cast<T>(kBiasInit));
    return l;
  }

  Tensor<T> forward(Tensor<T> x) const { return linear(x, weights, bias); }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.push_back({prefix + ".w", weights});
    out.push_back({prefix + ".b", bias});
  }
};

inline int scaled_channels(int base, double mult) {
  return std::max(1, static_cast<int>(std::lround(base * mult)));
}

// Conv/pool tower mapping one 64x64 single-channel patch to a compact
// descriptor. Architecture follows the MatchNet feature tower; the bottleneck
// output is linear so descriptor differences are unconstrained in sign.
//
//   conv 7x7x24 pad3 - pool - conv 5x5x64 pad2 - pool -
//   conv 3x3x96 pad1 - conv 3x3x96 pad1 - conv 3x3x64 pad1 - pool -
//   flatten - FC bottleneck (128 * bottleneck_multiplier)
//
// width_multiplier scales conv channel counts (rounded to nearest), used by
// the parameter-matched Siamese baseline.
template <typename T>
struct FeatureTower {
  static constexpr int kPatch = 64;
  static constexpr int kBaseBottleneck = 128;

  double width_multiplier = 1.0;
  double bottleneck_multiplier = 1.0;
  std::vector<ConvLayer<T>> convs;  // 5 layers
  FCLayer<T> bottleneck;

  static FeatureTower create(Rng& rng, double width_mult = 1.0, double bottleneck_mult = 1.0) {
    FeatureTower t;
    t.width_multiplier = width_mult;
    t.bottleneck_multiplier = bottleneck_mult;
    int c1 = scaled_channels(24, width_mult);
    int c2 = scaled_channels(64, width_mult);
    int c3 = scaled_channels(96, width_mult);
    int c4 = scaled_channels(96, width_mult);
    int c5 = scaled_channels(64, width_mult);
    t.convs.push_back(ConvLayer<T>::create(c1, 1, 7, 3, rng));
    t.convs.push_back(ConvLayer<T>::create(c2, c1, 5, 2, rng));
    t.convs.push_back(ConvLayer<T>::create(c3, c2, 3, 1, rng));
    t.convs.push_back(ConvLayer<T>::create(c4, c3, 3, 1, rng));
    t.convs.push_back(ConvLayer<T>::create(c5, c4, 3, 1, rng));
    t.bottleneck = FCLayer<T>::create(t.output_dim(), c5 * 8 * 8, rng);
    return t;
  }

  int output_dim() const {
    return static_cast<int>(std::lround(kBaseBottleneck * bottleneck_multiplier));
  }

  // patch: [1 x 64 x 64] or [N x 1 x 64 x 64]
  Tensor<T> forward(Tensor<T> patch) const {
    const Shape& s = patch.shape();
    bool batched = s.size() == 4;
    bool ok = (batched || s.size() == 3) && s[batched ? 1 : 0] == 1 &&
              s[batched ? 2 : 1] == kPatch && s[batched ? 3 : 2] == kPatch;
    if (!ok)
      throw DimensionError("tower expects a [1 x 64 x 64] patch (optionally batched), got " +
                           shape_str(s));
    int n = batched ? s[0] : 1;
    Tensor<T> h = patch;
    h = maxpool2(relu(convs[0].forward(h)));   // 64 -> 32
    h = maxpool2(relu(convs[1].forward(h)));   // 32 -> 16
    h = relu(convs[2].forward(h));
    h = relu(convs[3].forward(h));
    h = maxpool2(relu(convs[4].forward(h)));   // 16 -> 8
    int flat = convs[4].weights.shape()[0] * 8 * 8;
    h = reshape(h, batched ? Shape{n, flat} : Shape{flat});
    return bottleneck.forward(h);
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    for (size_t i = 0; i < convs.size(); ++i)
      convs[i].collect(prefix + ".conv" + std::to_string(i + 1), out);
    bottleneck.collect(prefix + ".bottleneck", out);
  }
};

// Three FC layers: in -> M1 -> M2 -> 2, relu between them, raw logits out.
template <typename T>
struct MetricNetwork {
  static constexpr int kHidden = 512;

  FCLayer<T> fc1, fc2, fc3;

  static MetricNetwork create(Rng& rng, int input_dim = 128, int hidden = kHidden) {
    MetricNetwork m;
    m.fc1 = FCLayer<T>::create(hidden, input_dim, rng);
    m.fc2 = FCLayer<T>::create(hidden, hidden, rng);
    m.fc3 = FCLayer<T>::create(2, hidden, rng);
    return m;
  }

  Tensor<T> forward(Tensor<T> v) const { return tail_from_fc2(fc2_out(fc1_out(v))); }

  // pre-activation taps used by the mid-metric fusion ablations
  Tensor<T> fc1_out(Tensor<T> v) const { return fc1.forward(v); }
  Tensor<T> fc2_out(Tensor<T> h1) const { return fc2.forward(relu(h1)); }
  Tensor<T> tail_from_fc1(Tensor<T> h1) const { return tail_from_fc2(fc2_out(h1)); }
  Tensor<T> tail_from_fc2(Tensor<T> h2) const { return fc3.forward(relu(h2)); }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
    fc3.collect(prefix + ".fc3", out);
  }
};

template <typename T>
long long count_parameters(const NamedParams<T>& params) {
  long long n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

}  // namespace ts
