#include "doctest.h"

#include <cmath>
#include <vector>

#include "dancegen/curriculum.hpp"
#include "dancegen/gradcheck.hpp"
#include "dancegen/rng.hpp"

using namespace dancegen;

namespace {

// Brute-force expander: append p PREDs then q GTs until n steps exist.
std::vector<Feed> expand_pattern(int n, std::int64_t p, int q) {
  std::vector<Feed> out;
  while (static_cast<int>(out.size()) < n) {
    for (std::int64_t i = 0; i < p; ++i) {
      if (static_cast<int>(out.size()) == n) break;
      out.push_back(Feed::PRED);
    }
    for (int i = 0; i < q; ++i) {
      if (static_cast<int>(out.size()) == n) break;
      out.push_back(Feed::GT);
    }
  }
  return out;
}

DecoderConfig toy_decoder() {
  DecoderConfig cfg;
  cfg.n_layers = 1;
  cfg.d_s = 4;
  cfg.d_y = 2;
  cfg.d_z = 3;
  return cfg;
}

}  // namespace

TEST_CASE("p_of_epoch reproduces the growth-function arithmetic") {
  CurriculumSchedule lin;
  lin.kind = GrowthKind::linear;
  lin.lambda = 0.01;
  CHECK(p_of_epoch(lin, 0) == 0);
  CHECK(p_of_epoch(lin, 100) == 1);
  CHECK(p_of_epoch(lin, 250) == 2);

  CurriculumSchedule expo;
  expo.kind = GrowthKind::exponential;
  expo.lambda = 0.01;
  CHECK(p_of_epoch(expo, 5) == 1);  // floor(0.01 * e^5) = floor(1.484)

  CurriculumSchedule quad;
  quad.kind = GrowthKind::quadratic;
  quad.lambda = 0.01;
  CHECK(p_of_epoch(quad, 20) == 4);  // floor(0.01 * 400)

  CurriculumSchedule constant;
  constant.kind = GrowthKind::constant;
  constant.const_p = 5;
  for (int t : {0, 1, 17, 4000}) CHECK(p_of_epoch(constant, t) == 5);

  CurriculumSchedule tf;
  tf.kind = GrowthKind::teacher_forcing;
  for (int t : {0, 9, 1234}) CHECK(p_of_epoch(tf, t) == 0);
}

TEST_CASE("p_of_epoch is monotone non-decreasing for the growing kinds") {
  for (auto kind : {GrowthKind::linear, GrowthKind::quadratic, GrowthKind::exponential}) {
    CurriculumSchedule s;
    s.kind = kind;
    s.lambda = 0.01;
    std::int64_t prev = 0;
    for (std::int64_t t = 0; t <= 2000; ++t) {
      const std::int64_t p = p_of_epoch(s, t);
      CHECK(p >= prev);
      prev = p;
    }
  }
}

TEST_CASE("build_feed_mask matches the hand-expanded patterns") {
  using F = Feed;
  CHECK(build_feed_mask(7, 2, 3) ==
        std::vector<F>{F::PRED, F::PRED, F::GT, F::GT, F::GT, F::PRED, F::PRED});
  CHECK(build_feed_mask(5, 0, 3) == std::vector<F>(5, F::GT));
  CHECK(build_feed_mask(5, 1, 10) == std::vector<F>{F::PRED, F::GT, F::GT, F::GT, F::GT});
}

TEST_CASE("build_feed_mask agrees with the brute-force expander on random cases") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(40));
    const std::int64_t p = static_cast<std::int64_t>(rng.below(8));
    const int q = 1 + static_cast<int>(rng.below(8));
    CAPTURE(n);
    CAPTURE(p);
    CAPTURE(q);
    CHECK(build_feed_mask(n, p, q) == expand_pattern(n, p, q));
  }
}

TEST_CASE("mask block structure: blocks bounded by p and q, PRED leads when p > 0") {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(60));
    const std::int64_t p = static_cast<std::int64_t>(rng.below(9));
    const int q = 1 + static_cast<int>(rng.below(9));
    const auto mask = build_feed_mask(n, p, q);
    if (p == 0) {
      CHECK(mask == std::vector<Feed>(n, Feed::GT));
      continue;
    }
    CHECK(mask[0] == Feed::PRED);
    int run = 1;
    for (std::size_t i = 1; i <= mask.size(); ++i) {
      if (i < mask.size() && mask[i] == mask[i - 1]) {
        ++run;
        continue;
      }
      const Feed kind = mask[i - 1];
      if (kind == Feed::PRED) CHECK(run <= p);
      else CHECK(run <= q);
      run = 1;
    }
  }
}

TEST_CASE("all-GT mask reproduces the teacher-forcing loss bit-exactly") {
  auto cfg = toy_decoder();
  Rng rng(47);
  auto params = DecoderParams::init(cfg, rng);
  Matrix z(6, cfg.d_z);
  Matrix y(6, cfg.d_y);
  for (auto& v : z.v) v = rng.uniform(-1, 1);
  for (auto& v : y.v) v = rng.uniform(-1, 1);
  std::vector<double> y0 = {0.2, -0.2};

  auto zt = Tensor::from_matrix(z);
  auto rollout = scheduled_rollout(zt, y, y0, params, cfg, build_feed_mask(6, 0, 10), 7);
  const double loss_masked = abs_sum(sub(rollout.outputs, Tensor::from_matrix(y))).scalar_value();

  // explicit teacher forcing: previous input is always ground truth
  DecoderState state = init_state(cfg, 7);
  Tensor prev = Tensor::row(y0);
  std::vector<Tensor> outs;
  for (int i = 0; i < 6; ++i) {
    auto [next, pose] = decode_step(state, prev, slice_rows(zt, i, 1), params, cfg);
    outs.push_back(pose);
    state = std::move(next);
    prev = Tensor::row(y.row_vec(i));
  }
  const double loss_tf = abs_sum(sub(concat_rows(outs), Tensor::from_matrix(y))).scalar_value();
  CHECK(loss_masked == loss_tf);
  for (auto feed : rollout.inputs_used) CHECK(feed == Feed::GT);
}

TEST_CASE("all-PRED mask reproduces free-running generation bit-exactly") {
  auto cfg = toy_decoder();
  Rng rng(53);
  auto params = DecoderParams::init(cfg, rng);
  Matrix z(9, cfg.d_z);
  Matrix y(9, cfg.d_y);
  for (auto& v : z.v) v = rng.uniform(-1, 1);
  for (auto& v : y.v) v = rng.uniform(-1, 1);
  std::vector<double> y0 = {0.1, 0.4};

  auto rollout = scheduled_rollout(Tensor::from_matrix(z), y, y0, params, cfg,
                                   std::vector<Feed>(9, Feed::PRED), 11);
  Matrix free_run = generate(z, y0, params, cfg, 11);
  CHECK(rollout.outputs.to_matrix() == free_run);
}

TEST_CASE("6-step interleaved rollout matches a straight-line trace") {
  // independent re-implementation: plain-double LSTM trace following the mask
  DecoderConfig cfg;
  cfg.n_layers = 1;
  cfg.d_s = 2;
  cfg.d_y = 1;
  cfg.d_z = 1;
  Rng rng(59);
  auto params = DecoderParams::init(cfg, rng);
  Matrix z(6, 1), y(6, 1);
  for (auto& v : z.v) v = rng.uniform(-1, 1);
  for (auto& v : y.v) v = rng.uniform(-1, 1);
  const auto mask = build_feed_mask(6, 2, 2);  // PRED PRED GT GT PRED PRED
  std::vector<double> y0 = {0.3};

  auto rollout = scheduled_rollout(Tensor::from_matrix(z), y, y0, params, cfg, mask, 13);

  // trace with plain doubles
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const auto& w = params.cells[0].w.values();   // (1+2) x 8
  const auto& b = params.cells[0].b.values();   // 8
  const auto& ow = params.out_w.values();       // (2+1) x 1
  const double ob = params.out_b.values()[0];
  auto state0 = init_state(cfg, 13);
  double h[2] = {state0.h[0].values()[0], state0.h[0].values()[1]};
  double c[2] = {state0.c[0].values()[0], state0.c[0].values()[1]};
  double prev = y0[0];
  std::vector<double> traced;
  for (int i = 0; i < 6; ++i) {
    double gates[8];
    for (int g = 0; g < 8; ++g) gates[g] = prev * w[g] + h[0] * w[8 + g] + h[1] * w[16 + g] + b[g];
    double gi[2] = {sig(gates[0]), sig(gates[1])};
    double gf[2] = {sig(gates[2]), sig(gates[3])};
    double go[2] = {sig(gates[4]), sig(gates[5])};
    double gc[2] = {std::tanh(gates[6]), std::tanh(gates[7])};
    for (int d = 0; d < 2; ++d) {
      c[d] = gf[d] * c[d] + gi[d] * gc[d];
      h[d] = go[d] * std::tanh(c[d]);
    }
    const double pose = h[0] * ow[0] + h[1] * ow[1] + z.at(i, 0) * ow[2] + ob;
    traced.push_back(pose);
    prev = (i + 1 < 6) ? (mask[i] == Feed::PRED ? pose : y.at(i, 0)) : 0.0;
  }
  for (int i = 0; i < 6; ++i)
    CHECK(std::fabs(rollout.outputs.to_matrix().at(i, 0) - traced[i]) <= 1e-10);
}

TEST_CASE("gradients flow through predicted-fed steps") {
  auto cfg = toy_decoder();
  Rng rng(61);
  auto params = DecoderParams::init(cfg, rng);
  ParamSet leaves;
  params.register_into(leaves);
  Matrix z(6, cfg.d_z), y(6, cfg.d_y);
  for (auto& v : z.v) v = rng.uniform(-1, 1);
  for (auto& v : y.v) v = rng.uniform(-1, 1);
  const auto mask = build_feed_mask(6, 2, 2);
  auto build = [&] {
    auto rollout = scheduled_rollout(Tensor::from_matrix(z), y, {0.1, -0.3}, params, cfg, mask, 17);
    return abs_sum(sub(rollout.outputs, Tensor::from_matrix(y)));
  };
  auto report = grad_check(build, leaves, 1e-5, 1e-4);
  CHECK_MESSAGE(report.pass, "max rel err " << report.max_rel_err);

  // the detach flag must change the gradients (prediction feedback path cut)
  leaves.zero_grad();
  backward(build());
  const double with_flow = leaves.grad_norm();
  leaves.zero_grad();
  auto detached = scheduled_rollout(Tensor::from_matrix(z), y, {0.1, -0.3}, params, cfg, mask, 17,
                                    /*detach_fed=*/true);
  backward(abs_sum(sub(detached.outputs, Tensor::from_matrix(y))));
  const double without_flow = leaves.grad_norm();
  CHECK(with_flow != without_flow);
}

TEST_CASE("scheduled_rollout rejects mismatched lengths") {
  auto cfg = toy_decoder();
  Rng rng(67);
  auto params = DecoderParams::init(cfg, rng);
  Matrix z(5, cfg.d_z), y(4, cfg.d_y);
  CHECK_THROWS_AS(scheduled_rollout(Tensor::from_matrix(z), y, {0, 0}, params, cfg,
                                    build_feed_mask(5, 1, 2), 1),
                  ShapeError);
}
