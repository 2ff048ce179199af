#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ts/losses.hpp"
#include "ts/rng.hpp"

using ts::Tensor;

namespace {

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

}  // namespace

TEST_CASE("cross-entropy frozen values") {
  // logits [3, 1]: p(match) = e^1 / (e^3 + e^1) = 0.11920292202211755
  auto l = Tensor<double>::from({2}, {3, 1}, true);
  CHECK(ts::cross_entropy(l, {0}).item() == doctest::Approx(0.12692801104297252).epsilon(1e-12));
  CHECK(ts::cross_entropy(l, {1}).item() == doctest::Approx(2.1269280110429727).epsilon(1e-12));

  // gradient d/dlogits = [-(p-y), p-y]
  auto loss = ts::cross_entropy(l, {0});
  ts::backward(loss);
  CHECK(l.grad()[0] == doctest::Approx(-0.11920292202211755).epsilon(1e-12));
  CHECK(l.grad()[1] == doctest::Approx(0.11920292202211755).epsilon(1e-12));

  // batch mean of the two cases above
  auto lb = Tensor<double>::from({2, 2}, {3, 1, 3, 1});
  double want = (0.12692801104297252 + 2.1269280110429727) / 2;
  CHECK(ts::cross_entropy(lb, {0, 1}).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("cross-entropy validation and clamping") {
  auto l = Tensor<float>::from({2}, {3, 1});
  CHECK_THROWS_AS(ts::cross_entropy(l, {2}), ts::DimensionError);
  CHECK_THROWS_AS(ts::cross_entropy(l, {0, 1}), ts::DimensionError);
  CHECK_THROWS_AS(ts::cross_entropy(Tensor<float>::from({3}, {1, 2, 3}), {0}),
                  ts::DimensionError);

  // saturated logits stay finite thanks to the 1e-7 clamp, and a clamped row
  // contributes zero gradient
  auto sat = Tensor<float>::from({2}, {100, -100}, true);
  auto loss = ts::cross_entropy(sat, {1});
  CHECK(std::isfinite(loss.item()));
  CHECK(loss.item() == doctest::Approx(-std::log(1e-7f)).epsilon(1e-4));
  ts::backward(loss);
  CHECK(sat.grad()[0] == 0.0f);
  CHECK(sat.grad()[1] == 0.0f);
}

TEST_CASE("cross-entropy gradient check") {
  ts::Rng rng(19);
  std::vector<double> v(8);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  auto l = Tensor<double>::from({4, 2}, v, true);
  std::vector<int> labels = {0, 1, 1, 0};
  auto f = [&labels](const std::vector<Tensor<double>>& p) {
    return ts::cross_entropy(p[0], labels);
  };
  CHECK(max_grad_rel_err<double>(f, {l}, 1e-5) < 1e-5);
}

TEST_CASE("contrastive frozen values (Q = 50)") {
  // f1 = [3,4], f2 = [0,0] => D = 5
  auto f1 = Tensor<double>::from({2}, {3, 4}, true);
  auto f2 = Tensor<double>::from({2}, {0, 0}, true);
  // positive: (2/Q) D^2 = (2/50)*25 = 1
  CHECK(ts::contrastive(f1, f2, {1}, 50.0).item() == doctest::Approx(1.0).epsilon(1e-12));
  // negative: 2Q e^{-2.77 D / Q} = 100 e^{-0.277}
  CHECK(ts::contrastive(f1, f2, {0}, 50.0).item() ==
        doctest::Approx(75.80544971105083).epsilon(1e-12));
  // negative-branch gradient wrt f1: -2*2.77 e^{-2.77D/Q} (f1-f2)/D
  auto ln = ts::contrastive(f1, f2, {0}, 50.0);
  ts::backward(ln);
  CHECK(f1.grad()[0] == doctest::Approx(-2.5197731483953296).epsilon(1e-10));
  CHECK(f1.grad()[1] == doctest::Approx(-3.3596975311937727).epsilon(1e-10));
  // antisymmetry: f2 receives the negated gradient
  CHECK(f2.grad()[0] == doctest::Approx(2.5197731483953296).epsilon(1e-10));
  CHECK(f2.grad()[1] == doctest::Approx(3.3596975311937727).epsilon(1e-10));

  // batch mean of one positive and one negative row at D = 5
  auto b1 = Tensor<double>::from({2, 2}, {3, 4, 3, 4});
  auto b2 = Tensor<double>::from({2, 2}, {0, 0, 0, 0});
  CHECK(ts::contrastive(b1, b2, {1, 0}, 50.0).item() ==
        doctest::Approx(38.40272485552541).epsilon(1e-12));

  // coincident features: positive loss 0, negative loss 2Q, both finite grads
  auto same1 = Tensor<double>::from({3}, {1, 2, 3}, true);
  auto same2 = Tensor<double>::from({3}, {1, 2, 3}, true);
  CHECK(ts::contrastive(same1, same2, {1}, 50.0).item() == doctest::Approx(0.0));
  auto lz = ts::contrastive(same1, same2, {0}, 50.0);
  CHECK(lz.item() == doctest::Approx(100.0));
  ts::backward(lz);
  for (double g : same1.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("contrastive validation") {
  auto a = Tensor<float>::from({2}, {1, 2});
  auto b = Tensor<float>::from({3}, {1, 2, 3});
  CHECK_THROWS_AS(ts::contrastive(a, b, {1}, 50.0f), ts::DimensionError);
  auto c = Tensor<float>::from({2}, {0, 0});
  CHECK_THROWS_AS(ts::contrastive(a, c, {3}, 50.0f), ts::DimensionError);
  CHECK_THROWS_AS(ts::contrastive(a, c, {1}, 0.0f), ts::DimensionError);
  CHECK_THROWS_AS(ts::contrastive(a, c, {1, 0}, 50.0f), ts::DimensionError);
}

TEST_CASE("contrastive gradient check, both branches") {
  ts::Rng rng(23);
  std::vector<double> v1(6), v2(6);
  for (auto& x : v1) x = rng.uniform(-1.0, 1.0);
  for (auto& x : v2) x = rng.uniform(-1.0, 1.0);
  auto f1 = Tensor<double>::from({3, 2}, v1, true);
  auto f2 = Tensor<double>::from({3, 2}, v2, true);
  std::vector<int> labels = {1, 0, 1};
  auto f = [&labels](const std::vector<Tensor<double>>& p) {
    return ts::contrastive(p[0], p[1], labels, 50.0);
  };
  CHECK(max_grad_rel_err<double>(f, {f1, f2}, 1e-5) < 1e-5);
}

TEST_CASE("l2_normalize_rows forward and gradient") {
  auto f = Tensor<double>::from({2, 2}, {3, 4, 0.6, 0.8});
  auto y = ts::l2_normalize_rows(f);
  CHECK(y.data()[0] == doctest::Approx(0.6));
  CHECK(y.data()[1] == doctest::Approx(0.8));
  CHECK(y.data()[2] == doctest::Approx(0.6));
  CHECK(y.data()[3] == doctest::Approx(0.8));

  ts::Rng rng(29);
  std::vector<double> v(6);
  for (auto& x : v) x = rng.uniform(0.5, 1.5);
  auto leaf = Tensor<double>::from({2, 3}, v, true);
  auto fn = [](const std::vector<Tensor<double>>& p) {
    return ts::l2norm_sq(ts::sub(ts::l2_normalize_rows(p[0]),
                                 Tensor<double>::from({2, 3}, {1, 0, 0, 0, 1, 0})));
  };
  CHECK(max_grad_rel_err<double>(fn, {leaf}, 1e-6) < 1e-5);
}
