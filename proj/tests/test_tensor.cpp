#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ts/rng.hpp"
#include "ts/tensor.hpp"

using ts::Tensor;

namespace {

// Max relative error between analytic gradients (reverse mode) and central
// finite differences over every element of every leaf.
// rel = |a - n| / max(1, |a| + |n|)
template <typename T, typename F>
double max_grad_rel_err(F f, std::vector<Tensor<T>> leaves, T h) {
  auto loss = f(leaves);
  ts::backward(loss);
  double worst = 0;
  for (auto& leaf : leaves) {
    auto& g = leaf.mutable_grad();
    for (size_t i = 0; i < leaf.data().size(); ++i) {
      T orig = leaf.data()[i];
      leaf.mutable_data()[i] = orig + h;
      double fp = static_cast<double>(f(leaves).item());
      leaf.mutable_data()[i] = orig - h;
      double fm = static_cast<double>(f(leaves).item());
      leaf.mutable_data()[i] = orig;
      double num = (fp - fm) / (2.0 * static_cast<double>(h));
      double ana = static_cast<double>(g[i]);
      double rel = std::abs(ana - num) / std::max(1.0, std::abs(ana) + std::abs(num));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

template <typename T>
Tensor<T> rand_leaf(ts::Rng& rng, ts::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(static_cast<size_t>(ts::numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

constexpr float kHF = 1e-3f;
constexpr double kTolF = 1e-3;   // 32-bit training dtype
constexpr double kHD = 1e-5;
constexpr double kTolD = 1e-5;   // 64-bit shadow mode

}  // namespace

TEST_CASE("tensor construction and validation") {
  auto t = Tensor<float>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.shape() == ts::Shape{2, 3});
  CHECK_THROWS_AS(Tensor<float>::from({2, 3}, {1, 2}), ts::DimensionError);
  CHECK_THROWS_AS(Tensor<float>::from({0, 3}, {}), ts::DimensionError);
  CHECK_THROWS_AS(Tensor<float>::from({-1}, {}), ts::DimensionError);
  CHECK(Tensor<float>::scalar(2.5f).item() == doctest::Approx(2.5));
  CHECK_THROWS_AS(t.item(), ts::DimensionError);
}

TEST_CASE("matmul forward frozen values") {
  // [[1,2],[3,4]] x [[5,6],[7,8]] = [[19,22],[43,50]]
  auto a = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor<float>::from({2, 2}, {5, 6, 7, 8});
  auto c = ts::matmul(a, b);
  CHECK(c.data() == std::vector<float>{19, 22, 43, 50});
  CHECK_THROWS_AS(ts::matmul(a, Tensor<float>::from({3, 2}, {1, 2, 3, 4, 5, 6})),
                  ts::DimensionError);
}

TEST_CASE("conv2d forward: mean kernel gives window means") {
  // 4x4 ramp, 2x2 kernel of 0.25, stride 2: each output = its window mean
  std::vector<float> ramp(16);
  for (int i = 0; i < 16; ++i) ramp[i] = static_cast<float>(i + 1);
  auto x = Tensor<float>::from({1, 4, 4}, ramp);
  auto w = Tensor<float>::from({1, 1, 2, 2}, {0.25f, 0.25f, 0.25f, 0.25f});
  auto b = Tensor<float>::from({1}, {0});
  auto y = ts::conv2d(x, w, b, /*stride=*/2, /*padding=*/0);
  CHECK(y.shape() == ts::Shape{1, 2, 2});
  CHECK(y.data() == std::vector<float>{3.5f, 5.5f, 11.5f, 13.5f});

  // padding=1, stride=1, 3x3 identity-center kernel reproduces the input
  auto w3 = Tensor<float>::from({1, 1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  auto y3 = ts::conv2d(x, w3, b, 1, 1);
  CHECK(y3.shape() == ts::Shape{1, 4, 4});
  CHECK(y3.data() == ramp);
}

TEST_CASE("conv2d is cross-correlation (no kernel flip)") {
  // Asymmetric kernel [[1,0],[0,0]] at stride 1: out(i,j) = x(i,j), not x(i+1,j+1)
  auto x = Tensor<float>::from({1, 2, 2}, {1, 2, 3, 4});
  auto w = Tensor<float>::from({1, 1, 2, 2}, {1, 0, 0, 0});
  auto b = Tensor<float>::from({1}, {0});
  auto y = ts::conv2d(x, w, b, 1, 0);
  CHECK(y.data() == std::vector<float>{1});
}

TEST_CASE("conv2d shape validation") {
  auto x = Tensor<float>::from({1, 4, 4}, std::vector<float>(16, 0.f));
  auto b = Tensor<float>::from({1}, {0});
  auto w_badc = Tensor<float>::from({1, 2, 2, 2}, std::vector<float>(8, 0.f));
  CHECK_THROWS_AS(ts::conv2d(x, w_badc, b, 1, 0), ts::DimensionError);
  auto w_big = Tensor<float>::from({1, 1, 5, 5}, std::vector<float>(25, 0.f));
  CHECK_THROWS_AS(ts::conv2d(x, w_big, b, 1, 0), ts::DimensionError);
  auto w = Tensor<float>::from({1, 1, 2, 2}, std::vector<float>(4, 0.f));
  CHECK_THROWS_AS(ts::conv2d(x, w, Tensor<float>::from({2}, {0, 0}), 1, 0),
                  ts::DimensionError);
  CHECK_THROWS_AS(ts::conv2d(x, w, b, 0, 0), ts::DimensionError);
}

TEST_CASE("maxpool2 forward frozen values and validation") {
  std::vector<float> ramp(16);
  for (int i = 0; i < 16; ++i) ramp[i] = static_cast<float>(i + 1);
  auto y = ts::maxpool2(Tensor<float>::from({1, 4, 4}, ramp));
  CHECK(y.shape() == ts::Shape{1, 2, 2});
  CHECK(y.data() == std::vector<float>{6, 8, 14, 16});
  CHECK_THROWS_AS(ts::maxpool2(Tensor<float>::from({1, 3, 4}, std::vector<float>(12, 0.f))),
                  ts::DimensionError);
}

TEST_CASE("maxpool2 ties route gradient to first element in window order") {
  auto x = Tensor<float>::from({1, 2, 2}, {1, 1, 1, 1}, true);
  auto loss = ts::sum(ts::maxpool2(x));
  ts::backward(loss);
  CHECK(x.grad() == std::vector<float>{1, 0, 0, 0});
}

TEST_CASE("softmax2 forward") {
  auto y = ts::softmax2(Tensor<float>::from({2}, {0, 0}));
  CHECK(y.data()[0] == doctest::Approx(0.5));
  CHECK(y.data()[1] == doctest::Approx(0.5));
  // stability under large logits
  auto y2 = ts::softmax2(Tensor<float>::from({2}, {1000, 999}));
  CHECK(y2.all_finite());
  CHECK(y2.data()[0] + y2.data()[1] == doctest::Approx(1.0));
  // batched rows each sum to one
  auto yb = ts::softmax2(Tensor<float>::from({3, 2}, {1, 2, -4, 0.5f, 7, 7}));
  for (int r = 0; r < 3; ++r)
    CHECK(yb.data()[2 * r] + yb.data()[2 * r + 1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(ts::softmax2(Tensor<float>::from({3}, {1, 2, 3})), ts::DimensionError);
}

TEST_CASE("gradient check: matmul / linear (float and double)") {
  ts::Rng rng(42);
  {
    auto a = rand_leaf<float>(rng, {3, 4});
    auto b = rand_leaf<float>(rng, {4, 2});
    auto f = [](const std::vector<Tensor<float>>& p) {
      return ts::sum(ts::matmul(p[0], p[1]));
    };
    CHECK(max_grad_rel_err<float>(f, {a, b}, kHF) < kTolF);
  }
  {
    auto x = rand_leaf<double>(rng, {3, 5});
    auto w = rand_leaf<double>(rng, {4, 5});
    auto b = rand_leaf<double>(rng, {4});
    auto f = [](const std::vector<Tensor<double>>& p) {
      return ts::l2norm_sq(ts::linear(p[0], p[1], p[2]));
    };
    CHECK(max_grad_rel_err<double>(f, {x, w, b}, kHD) < kTolD);
  }
  {
    // vector input path
    auto x = rand_leaf<double>(rng, {5});
    auto w = rand_leaf<double>(rng, {4, 5});
    auto b = rand_leaf<double>(rng, {4});
    auto f = [](const std::vector<Tensor<double>>& p) {
      return ts::sum(ts::linear(p[0], p[1], p[2]));
    };
    CHECK(max_grad_rel_err<double>(f, {x, w, b}, kHD) < kTolD);
  }
}

TEST_CASE("gradient check: conv2d") {
  ts::Rng rng(7);
  {
    auto x = rand_leaf<double>(rng, {2, 6, 6});
    auto w = rand_leaf<double>(rng, {3, 2, 3, 3});
    auto b = rand_leaf<double>(rng, {3});
    auto f = [](const std::vector<Tensor<double>>& p) {
      return ts::l2norm_sq(ts::conv2d(p[0], p[1], p[2], 1, 1));
    };
    CHECK(max_grad_rel_err<double>(f, {x, w, b}, kHD) < kTolD);
  }
  {
    // stride 2, no padding, batched rank-4 input
    auto x = rand_leaf<double>(rng, {2, 1, 6, 6});
    auto w = rand_leaf<double>(rng, {2, 1, 2, 2});
    auto b = rand_leaf<double>(rng, {2});
    auto f = [](const std::vector<Tensor<double>>& p) {
      return ts::mean(ts::conv2d(p[0], p[1], p[2], 2, 0));
    };
    CHECK(max_grad_rel_err<double>(f, {x, w, b}, kHD) < kTolD);
  }
  {
    // 32-bit at the looser tolerance
    auto x = rand_leaf<float>(rng, {1, 4, 4});
    auto w = rand_leaf<float>(rng, {2, 1, 3, 3});
    auto b = rand_leaf<float>(rng, {2});
    auto f = [](const std::vector<Tensor<float>>& p) {
      return ts::mean(ts::conv2d(p[0], p[1], p[2], 1, 1));
    };
    CHECK(max_grad_rel_err<float>(f, {x, w, b}, kHF) < kTolF);
  }
}

TEST_CASE("gradient check: pool, relu, elementwise, reductions") {
  ts::Rng rng(11);
  {
    // distinct values keep FD away from max-pool kinks
    std::vector<double> v(16);
    for (int i = 0; i < 16; ++i) v[i] = 0.13 * i - 0.9;
    auto x = Tensor<double>::from({1, 4, 4}, v, true);
    auto f = [](const std::vector<Tensor<double>>& p) {
      return ts::l2norm_sq(ts::maxpool2(p[0]));
    };
    CHECK(max_grad_rel_err<double>(f, {x}, kHD) < kTolD);
  }
  {
    // keep inputs away from the relu kink at 0
    std::vector<double> v = {-0.9, -0.4, 0.3, 0.8, 1.4, -1.2};
    auto x = Tensor<double>::from({6}, v, true);
    auto f = [](const std::vector<Tensor<double>>& p) {
      return ts::sum(ts::relu(p[0]));
    };
    CHECK(max_grad_rel_err<double>(f, {x}, kHD) < kTolD);
  }
  {
    auto a = rand_leaf<double>(rng, {3, 3});
    auto b = rand_leaf<double>(rng, {3, 3});
    auto f = [](const std::vector<Tensor<double>>& p) {
      return ts::l2norm_sq(ts::mul(ts::sub(p[0], p[1]), ts::add(p[0], p[1])));
    };
    CHECK(max_grad_rel_err<double>(f, {a, b}, kHD) < kTolD);
  }
  {
    auto a = rand_leaf<double>(rng, {2, 3});
    auto b = rand_leaf<double>(rng, {2, 2});
    auto f = [](const std::vector<Tensor<double>>& p) {
      return ts::mean(ts::scale(ts::concat(p[0], p[1], 1), 1.7));
    };
    CHECK(max_grad_rel_err<double>(f, {a, b}, kHD) < kTolD);
  }
  {
    auto x = rand_leaf<double>(rng, {4});
    auto f = [](const std::vector<Tensor<double>>& p) {
      return ts::l2norm_sq(ts::softmax2(ts::reshape(p[0], {2, 2})));
    };
    CHECK(max_grad_rel_err<double>(f, {x}, kHD) < kTolD);
  }
}

TEST_CASE("shared leaves accumulate gradients (weight sharing)") {
  // loss = sum(x) + sum(x) => dl/dx = 2 everywhere
  auto x = Tensor<float>::from({3}, {1, 2, 3}, true);
  auto loss = ts::add(ts::sum(x), ts::sum(x));
  ts::backward(loss);
  CHECK(x.grad() == std::vector<float>{2, 2, 2});

  // gradient check through a genuinely shared sub-expression
  auto y = Tensor<double>::from({2, 2}, {0.3, -0.7, 1.1, 0.2}, true);
  auto f = [](const std::vector<Tensor<double>>& p) {
    return ts::sum(ts::matmul(p[0], p[0]));
  };
  CHECK(max_grad_rel_err<double>(f, {y}, kHD) < kTolD);
}

TEST_CASE("backward requires a scalar; grads persist until zero_grad") {
  auto x = Tensor<float>::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(ts::backward(ts::relu(x)), ts::DimensionError);
  auto l1 = ts::sum(x);
  ts::backward(l1);
  auto l2 = ts::sum(ts::scale(x, 2.f));
  ts::backward(l2);
  CHECK(x.grad() == std::vector<float>{3, 3});  // 1 + 2 accumulated
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("ops that skip undefined input gradients") {
  // conv input without requires_grad must not allocate a gradient
  auto x = Tensor<float>::from({1, 4, 4}, std::vector<float>(16, 1.f), false);
  auto w = Tensor<float>::from({1, 1, 3, 3}, std::vector<float>(9, 0.1f), true);
  auto b = Tensor<float>::from({1}, {0.f}, true);
  auto loss = ts::sum(ts::conv2d(x, w, b, 1, 1));
  ts::backward(loss);
  CHECK_FALSE(x.has_grad());
  CHECK(w.has_grad());
  CHECK(b.has_grad());
}

TEST_CASE("determinism: identical graphs produce identical bits") {
  ts::Rng rng(99);
  auto x1 = rand_leaf<float>(rng, {2, 8, 8});
  auto x2 = Tensor<float>::from(x1.shape(), x1.data(), true);
  auto w = rand_leaf<float>(rng, {3, 2, 3, 3});
  auto b = rand_leaf<float>(rng, {3});
  auto run = [&](Tensor<float> x) {
    auto loss = ts::l2norm_sq(ts::maxpool2(ts::relu(ts::conv2d(x, w, b, 1, 1))));
    w.zero_grad();
    b.zero_grad();
    ts::backward(loss);
    return std::make_tuple(loss.item(), w.grad(), b.grad());
  };
  auto r1 = run(x1);
  auto r2 = run(x2);
  CHECK(std::get<0>(r1) == std::get<0>(r2));
  CHECK(std::get<1>(r1) == std::get<1>(r2));
  CHECK(std::get<2>(r1) == std::get<2>(r2));
}

TEST_CASE("batched conv equals per-sample conv") {
  ts::Rng rng(5);
  auto xb = rand_leaf<float>(rng, {3, 2, 6, 6});
  auto w = rand_leaf<float>(rng, {4, 2, 3, 3});
  auto b = rand_leaf<float>(rng, {4});
  auto yb = ts::conv2d(xb, w, b, 1, 1);
  size_t sample_in = 2 * 6 * 6, sample_out = 4 * 6 * 6;
  for (int s = 0; s < 3; ++s) {
    std::vector<float> xi(xb.data().begin() + s * sample_in,
                          xb.data().begin() + (s + 1) * sample_in);
    auto yi = ts::conv2d(Tensor<float>::from({2, 6, 6}, xi), w, b, 1, 1);
    for (size_t i = 0; i < sample_out; ++i)
      CHECK(yb.data()[s * sample_out + i] == yi.data()[i]);
  }
}
