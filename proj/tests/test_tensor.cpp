#include "doctest.h"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dancegen/rng.hpp"
#include "dancegen/tensor.hpp"

using namespace dancegen;

namespace {

// Test-side central-difference oracle over a single leaf tensor.
std::vector<double> finite_diff(const std::function<Tensor()>& f, Tensor& x, double h = 1e-5) {
  std::vector<double> out(x.size());
  auto& values = x.mutable_values();
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double fp = f().scalar_value();
    values[i] = saved - h;
    const double fm = f().scalar_value();
    values[i] = saved;
    out[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1.0});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Random values in [-1, 1], nudged away from 0 so kinked ops (relu, abs)
// stay differentiable at the sample point.
Tensor random_leaf(std::vector<int> shape, Rng& rng, bool avoid_zero = false) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> data(n);
  for (auto& x : data) {
    x = rng.uniform(-1.0, 1.0);
    if (avoid_zero && std::fabs(x) < 0.05) x = x < 0 ? x - 0.05 : x + 0.05;
  }
  return Tensor::from(std::move(shape), std::move(data), /*requires_grad=*/true);
}

}  // namespace

TEST_CASE("matmul identity leaves the input unchanged") {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto c = matmul(a, eye);
  CHECK(c.values() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("matmul 2x3 * 3x1 matches hand arithmetic") {
  auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor::from({3, 1}, {7, 8, 9});
  auto c = matmul(a, b);
  // 1*7 + 2*8 + 3*9 = 50 ; 4*7 + 5*8 + 6*9 = 122
  CHECK(c.values()[0] == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(c.values()[1] == doctest::Approx(122.0).epsilon(1e-15));
}

TEST_CASE("matmul shape mismatch names the op and shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("softmax of a constant row is uniform") {
  auto x = Tensor::from({1, 3}, {0, 0, 0});
  auto y = softmax_rows(x);
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax rows are non-negative and sum to 1") {
  Rng rng(7);
  auto x = random_leaf({8, 13}, rng);
  auto y = softmax_rows(x);
  for (int i = 0; i < 8; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 13; ++j) {
      CHECK(y.at(i, j) >= 0.0);
      sum += y.at(i, j);
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("backward of sum is all-ones") {
  auto x = Tensor::from({2, 3}, {0.5, -1, 2, 3, -4, 5}, true);
  auto loss = sum_all(x);
  backward(loss);
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of sum(x*x) is 2x") {
  auto x = Tensor::from({1, 2}, {1, 2}, true);
  auto loss = sum_all(mul(x, x));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("shared subgraphs accumulate gradients once per path") {
  auto x = Tensor::from({1, 2}, {3, -1}, true);
  auto doubled = add(x, x);           // two paths into x
  auto loss = sum_all(mul(doubled, doubled));  // d/dx 4x^2 = 8x
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(24.0));
  CHECK(x.grad()[1] == doctest::Approx(-8.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  auto x = Tensor::from({1, 2}, {1, 2}, true);
  auto y = add(x, x);
  CHECK_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("random 3-op composite matches finite differences") {
  Rng rng(11);
  auto x = random_leaf({3, 4}, rng);
  auto w = random_leaf({4, 2}, rng);
  auto build = [&] { return abs_sum(tanh_act(matmul(x, w))); };

  x.zero_grad();
  w.zero_grad();
  backward(build());
  CHECK(max_rel_err(x.grad(), finite_diff(build, x)) < 1e-4);
  CHECK(max_rel_err(w.grad(), finite_diff(build, w)) < 1e-4);
}

TEST_CASE("every differentiable op matches finite differences on random input") {
  Rng rng(23);
  // each case: (name, loss builder over leaf x)
  auto x = random_leaf({4, 5}, rng, /*avoid_zero=*/true);
  auto y = random_leaf({4, 5}, rng, /*avoid_zero=*/true);
  auto w = random_leaf({5, 3}, rng);
  auto gain = random_leaf({1, 5}, rng);
  auto bias = random_leaf({1, 5}, rng);
  auto rowv = random_leaf({1, 5}, rng);
  auto q = random_leaf({6, 3}, rng);
  auto k = random_leaf({6, 3}, rng);
  auto v = random_leaf({6, 4}, rng);

  struct Case {
    const char* name;
    std::function<Tensor()> f;
    std::vector<Tensor*> leaves;
  };
  // weight each op's output with a per-case fixed random matrix so gradients
  // are non-uniform; the fixed seed keeps f deterministic across evaluations
  auto probe = [](const Tensor& t, std::uint64_t seed) {
    Rng local(seed);
    auto r = Tensor::rand_uniform({t.rows(), t.cols()}, local, 0.5, 1.5);
    return sum_all(mul(t, r));
  };
  std::vector<Case> cases = {
      {"add", [&] { return probe(add(x, y), 101); }, {&x, &y}},
      {"sub", [&] { return probe(sub(x, y), 102); }, {&x, &y}},
      {"scale", [&] { return probe(scale(x, -1.7), 103); }, {&x}},
      {"mul", [&] { return probe(mul(x, y), 104); }, {&x, &y}},
      {"matmul", [&] { return probe(matmul(x, w), 105); }, {&x, &w}},
      {"transpose", [&] { return probe(transpose(x), 106); }, {&x}},
      {"concat_cols", [&] { return probe(concat_cols({x, y}), 107); }, {&x, &y}},
      {"concat_rows", [&] { return probe(concat_rows({x, y}), 108); }, {&x, &y}},
      {"slice_rows", [&] { return probe(slice_rows(x, 1, 2), 109); }, {&x}},
      {"slice_cols", [&] { return probe(slice_cols(x, 2, 2), 110); }, {&x}},
      {"softmax", [&] { return probe(softmax_rows(x), 111); }, {&x}},
      {"relu", [&] { return probe(relu(x), 112); }, {&x}},
      {"sigmoid", [&] { return probe(sigmoid(x), 113); }, {&x}},
      {"tanh", [&] { return probe(tanh_act(x), 114); }, {&x}},
      {"log", [&] { return probe(log_op(add(mul(x, x), Tensor::from(x.shape(), std::vector<double>(x.size(), 0.5)))), 115); }, {&x}},
      {"abs_sum", [&] { return abs_sum(x); }, {&x}},
      {"sum_all", [&] { return sum_all(mul(x, x)); }, {&x}},
      {"tile_rows", [&] { return probe(tile_rows(rowv, 4), 116); }, {&rowv}},
      {"mean_rows", [&] { return probe(mean_rows(x), 117); }, {&x}},
      {"layer_norm", [&] { return probe(layer_norm_rows(x, gain, bias), 118); }, {&x, &gain, &bias}},
      {"windowed_attention",
       [&] { return probe(windowed_attention(q, k, v, 3), 119); },
       {&q, &k, &v}},
  };

  for (auto& c : cases) {
    CAPTURE(c.name);
    for (auto* leaf : c.leaves) leaf->zero_grad();
    backward(c.f());
    for (auto* leaf : c.leaves) {
      const double err = max_rel_err(leaf->grad(), finite_diff(c.f, *leaf));
      CHECK_MESSAGE(err < 1e-4, c.name << ": rel err " << err);
    }
  }
}

TEST_CASE("same graph twice gives bit-identical outputs") {
  Rng rng(5);
  auto x = random_leaf({6, 6}, rng);
  auto w = random_leaf({6, 6}, rng);
  auto run = [&] {
    auto z = layer_norm_rows(tanh_act(matmul(x, w)), Tensor::from({1, 6}, std::vector<double>(6, 1.0)),
                             Tensor::zeros({1, 6}));
    return softmax_rows(z).values();
  };
  CHECK(run() == run());
}

TEST_CASE("forward ops on finite inputs stay finite") {
  Rng rng(31);
  auto x = random_leaf({5, 5}, rng);
  auto w = random_leaf({5, 5}, rng);
  auto z = sigmoid(matmul(softmax_rows(x), tanh_act(w)));
  CHECK(z.all_finite());
}

TEST_CASE("no-grad mode records no tape") {
  auto x = Tensor::from({1, 2}, {1, 2}, true);
  NoGradGuard guard;
  auto y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("windowed attention weights are row-stochastic inside the window") {
  Rng rng(13);
  const int n = 9, window = 4;
  auto q = random_leaf({n, 3}, rng);
  auto k = random_leaf({n, 3}, rng);
  auto v = random_leaf({n, 2}, rng);
  auto out = windowed_attention(q, k, v, window);
  CHECK(out.rows() == n);
  CHECK(out.cols() == 2);
}

TEST_CASE("deep op chains tear down without stack overflow") {
  auto x = Tensor::from({1, 4}, {0.1, 0.2, 0.3, 0.4}, true);
  Tensor cur = x;
  for (int i = 0; i < 200000; ++i) cur = scale(cur, 1.0);
  CHECK(cur.values()[0] == doctest::Approx(0.1));
  // cur goes out of scope here; iterative Node teardown must handle the chain
}
