#include "doctest.h"

#include "dancegen/gradcheck.hpp"
#include "dancegen/rng.hpp"
#include "dancegen/tensor.hpp"

using namespace dancegen;

TEST_CASE("quadratic form passes at tight tolerance") {
  Rng rng(3);
  ParamSet leaves;
  leaves.add("x", Tensor::rand_uniform({1, 6}, rng, -1.0, 1.0, true));
  leaves.add("a", Tensor::rand_uniform({6, 6}, rng, -1.0, 1.0, true));
  auto build = [&] {
    auto& x = leaves.find("x");
    auto& a = leaves.find("a");
    return sum_all(mul(matmul(x, a), x));
  };
  auto report = grad_check(build, leaves, 1e-5, 1e-6);
  CHECK(report.pass);
  CHECK(report.coords_checked == 42);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("a corrupted backward rule is caught") {
  // custom op with a deliberately wrong gradient: forward x^2, backward 1.9x
  auto sloppy_square = [](const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * x.values()[i];
    return detail::make_op(x.shape(), std::move(out), {x}, [](autograd::Node& n) {
      auto& p = *n.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        p.grad[i] += n.grad[i] * 1.9 * p.value[i];  // should be 2x
    });
  };
  Rng rng(4);
  ParamSet leaves;
  leaves.add("x", Tensor::rand_uniform({1, 4}, rng, 0.5, 1.5, true));
  auto build = [&] { return sum_all(sloppy_square(leaves.find("x"))); };
  auto report = grad_check(build, leaves, 1e-5, 1e-4);
  CHECK_FALSE(report.pass);
  CHECK(report.failures.size() == 4);
  CHECK(report.failures[0].param == "x");
}

TEST_CASE("non-scalar loss is rejected") {
  ParamSet leaves;
  leaves.add("x", Tensor::from({1, 2}, {1, 2}, true));
  auto build = [&] { return mul(leaves.find("x"), leaves.find("x")); };
  CHECK_THROWS_AS(grad_check(build, leaves), ShapeError);
}

TEST_CASE("report restores leaf values after probing") {
  ParamSet leaves;
  leaves.add("x", Tensor::from({1, 3}, {0.25, -0.5, 1.0}, true));
  auto build = [&] { return abs_sum(leaves.find("x")); };
  grad_check(build, leaves);
  CHECK(leaves.find("x").values() == std::vector<double>{0.25, -0.5, 1.0});
}
