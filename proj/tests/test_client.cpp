#include "doctest.h"

#include "asofed/client.hpp"
#include "asofed/models.hpp"
#include "asofed/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

using namespace asofed;

namespace {

ModelSpec linear_spec(int in_dim) { return ModelSpec{ModelFamily::kLinearRegression, in_dim, 1, 0}; }

ParamSet scalar_params(double w, double b) {
  Eigen::MatrixXd wm(1, 1), bm(1, 1);
  wm << w;
  bm << b;
  return ParamSet({wm, bm});
}

Sample make_sample(std::initializer_list<double> xs, double y) {
  Sample s;
  s.features = Eigen::VectorXd(static_cast<Eigen::Index>(xs.size()));
  int i = 0;
  for (double x : xs) s.features[i++] = x;
  s.target = Eigen::VectorXd::Constant(1, y);
  return s;
}

// A shard whose train split is the sample list itself (no val/test).
ClientShard make_shard(std::vector<Sample> samples) {
  ClientShard shard;
  shard.samples = std::move(samples);
  shard.split.train.resize(shard.samples.size());
  for (std::size_t i = 0; i < shard.samples.size(); ++i) {
    shard.split.train[i] = static_cast<int>(i);
  }
  shard.visible_count = shard.train_size();
  return shard;
}

ClientShard regression_shard(int n, int dim, std::uint64_t seed) {
  rng::Stream stream(seed);
  std::vector<Sample> samples;
  Eigen::VectorXd w_true = Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) {
    return stream.normal();
  });
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.features = Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return stream.normal(); });
    s.target = Eigen::VectorXd::Constant(1, w_true.dot(s.features) + 0.01 * stream.normal());
    samples.push_back(std::move(s));
  }
  return make_shard(std::move(samples));
}

}  // namespace

TEST_CASE("make_client validates hyperparameters") {
  const ParamSet w = scalar_params(0.0, 0.0);
  CHECK_NOTHROW(make_client(0, w, 0.001, 0.5, 0.001, 2, 32, 1));
  CHECK_THROWS_AS(make_client(0, w, 0.0, 0.5, 0.001, 2, 32, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_client(0, w, 0.001, -0.1, 0.001, 2, 32, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_client(0, w, 0.001, 0.5, 1.0, 2, 32, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_client(0, w, 0.001, 0.5, -0.1, 2, 32, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_client(0, w, 0.001, 0.5, 0.001, 0, 32, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_client(0, w, 0.001, 0.5, 0.001, 2, 0, 1), std::invalid_argument);
}

TEST_CASE("make_client zeroes the accumulators") {
  const ParamSet w = scalar_params(0.25, -0.5);
  const ClientState state = make_client(3, w, 0.001, 0.5, 0.001, 2, 32, 9);
  CHECK(state.id == 3);
  CHECK(state.w == w);
  CHECK(state.h.squared_norm() == 0.0);
  CHECK(state.v.squared_norm() == 0.0);
  CHECK(state.grad_s_prev.squared_norm() == 0.0);
  CHECK(state.r_multiplier == 1.0);
}

TEST_CASE("surrogate gradient adds the proximal pull toward the server model") {
  // Data gradient at w=0.1,b=0 on (x=1, y=-0.4): err = 0.5 -> dW = 0.5, db = 0.5.
  // Proximal term with lambda=1 against w_server=0 adds 0.1 to dW only.
  ClientState state = make_client(0, scalar_params(0.1, 0.0), 0.001, 1.0, 0.0, 1, 4, 1);
  const ParamSet w_server = scalar_params(0.0, 0.0);
  const std::vector<Sample> batch{make_sample({1.0}, -0.4)};
  const GradResult res = surrogate_grad(state, w_server, linear_spec(1), batch);
  CHECK(res.grad.layer(0)(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(res.grad.layer(1)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(res.loss == doctest::Approx(0.125).epsilon(1e-12));  // plain data loss only
}

TEST_CASE("surrogate gradient with zero lambda is the data gradient") {
  ClientState state = make_client(0, scalar_params(0.1, 0.0), 0.001, 0.0, 0.0, 1, 4, 1);
  const ParamSet w_server = scalar_params(9.0, 9.0);  // would dominate if lambda counted
  const std::vector<Sample> batch{make_sample({1.0}, -0.4)};
  const GradResult res = surrogate_grad(state, w_server, linear_spec(1), batch);
  CHECK(res.grad.layer(0)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("balanced gradient oracle") {
  ClientState state = make_client(0, scalar_params(0.0, 0.0), 0.001, 0.5, 0.001, 1, 4, 1);
  state.h = scalar_params(0.3, 0.0);
  state.grad_s_prev = scalar_params(0.1, 0.0);
  const ParamSet zeta = balanced_grad(state, scalar_params(0.5, 0.0));
  CHECK(zeta.layer(0)(0, 0) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("balanced gradient cancels exactly when h equals the previous gradient") {
  ClientState state = make_client(0, scalar_params(0.0, 0.0), 0.001, 0.5, 0.001, 1, 4, 1);
  const double awkward = 0.1 + 0.2;  // not exactly representable as 0.3
  state.h = scalar_params(awkward, -awkward);
  state.grad_s_prev = scalar_params(awkward, -awkward);
  const ParamSet grad_s = scalar_params(1.0 / 3.0, 2.0 / 7.0);
  const ParamSet zeta = balanced_grad(state, grad_s);
  CHECK(zeta == grad_s);  // bitwise, not approximately
}

TEST_CASE("dynamic multiplier follows the log of the mean round duration") {
  ClientState state = make_client(0, scalar_params(0.0, 0.0), 0.001, 0.5, 0.001, 1, 4, 1);
  CHECK(update_multiplier(state, 10.0) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(update_multiplier(state, 100.0) == doctest::Approx(std::log(55.0)).epsilon(1e-12));
  CHECK(state.r_multiplier == doctest::Approx(4.00733318523247).epsilon(1e-10));
  CHECK(state.delay_history.size() == 2);
}

TEST_CASE("dynamic multiplier never drops below one") {
  ClientState state = make_client(0, scalar_params(0.0, 0.0), 0.001, 0.5, 0.001, 1, 4, 1);
  CHECK(update_multiplier(state, 1.0) == 1.0);      // ln(1) = 0 -> clamp
  CHECK(update_multiplier(state, 0.001) == 1.0);    // mean 0.5005 -> ln < 0 -> clamp
  CHECK_THROWS_AS(update_multiplier(state, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(update_multiplier(state, -5.0), std::invalid_argument);
}

TEST_CASE("local rounds are deterministic given equal state") {
  const ModelSpec spec = linear_spec(3);
  const ParamSet w0 = init_params(spec, 4);
  const ClientShard shard = regression_shard(24, 3, 6);
  ClientState a = make_client(0, w0, 0.01, 0.5, 0.001, 2, 8, 33);
  a.n_visible = shard.visible_count;
  ClientState b = a;
  const LocalStepResult ra = local_step(a, w0, spec, shard);
  const LocalStepResult rb = local_step(b, w0, spec, shard);
  CHECK(ra.w_new == rb.w_new);
  CHECK(ra.train_loss == rb.train_loss);
  CHECK(ra.steps == rb.steps);
  CHECK(ra.steps == 6);  // 2 epochs x ceil(24/8) batches
}

TEST_CASE("a round with no visible data is skipped") {
  const ModelSpec spec = linear_spec(3);
  const ParamSet w0 = init_params(spec, 4);
  ClientShard shard = regression_shard(10, 3, 6);
  ClientState state = make_client(0, w0, 0.01, 0.5, 0.001, 2, 8, 33);
  state.n_visible = 0;
  const LocalStepResult res = local_step(state, w0, spec, shard);
  CHECK(res.skipped);
  CHECK(res.steps == 0);
  CHECK(res.w_new == w0);
}

TEST_CASE("training moves the model toward lower loss") {
  const ModelSpec spec = linear_spec(4);
  const ParamSet w0 = init_params(spec, 10);
  const ClientShard shard = regression_shard(60, 4, 11);
  std::vector<Sample> train;
  for (int idx : shard.split.train) train.push_back(shard.samples[idx]);
  ClientState state = make_client(0, w0, 0.05, 0.0, 0.001, 4, 16, 2);
  state.n_visible = shard.visible_count;
  const double before = loss_only(spec, w0, train);
  const LocalStepResult res = local_step(state, w0, spec, shard);
  CHECK(loss_only(spec, res.w_new, train) < before);
}

TEST_CASE("exploding updates raise a divergence error naming the client") {
  const ModelSpec spec = linear_spec(3);
  const ParamSet w0 = init_params(spec, 4);
  const ClientShard shard = regression_shard(24, 3, 6);
  ClientState state = make_client(7, w0, 1e14, 0.0, 0.001, 8, 4, 33);
  state.n_visible = shard.visible_count;
  try {
    (void)local_step(state, w0, spec, shard);
    // Divergence may need a few rounds of compounding.
    for (int i = 0; i < 20; ++i) (void)local_step(state, state.w, spec, shard);
    FAIL("expected NumericDivergenceError");
  } catch (const NumericDivergenceError& e) {
    CHECK(std::string(e.what()).find("client 7") != std::string::npos);
  }
}

TEST_CASE("beta=0, lambda=0, fold-before ordering reduces bitwise to plain SGD") {
  const ModelSpec spec = linear_spec(3);
  const ParamSet w0 = init_params(spec, 14);
  const ClientShard shard = regression_shard(20, 3, 8);

  ClientState balanced = make_client(0, w0, 0.02, 0.0, 0.0, 2, 8, 55);
  balanced.ordering = BalanceOrdering::kHBeforeBalance;
  balanced.n_visible = shard.visible_count;
  ClientState plain = make_client(0, w0, 0.02, 0.0, 0.0, 2, 8, 55);
  plain.n_visible = shard.visible_count;

  ParamSet server_a = w0;
  ParamSet server_b = w0;
  for (int round = 0; round < 3; ++round) {
    const LocalStepResult ra = local_step(balanced, server_a, spec, shard);
    const LocalStepResult rb = local_step_fedavg(plain, server_b, spec, shard);
    REQUIRE(ra.w_new == rb.w_new);  // bitwise identical across rounds
    server_a = ra.w_new;
    server_b = rb.w_new;
  }
}

TEST_CASE("first step matches the proximal baseline, later steps diverge") {
  const ModelSpec spec = linear_spec(3);
  const ParamSet w0 = init_params(spec, 24);
  ClientShard shard = regression_shard(4, 3, 9);  // one batch -> one step per round

  ClientState aso = make_client(0, w0, 0.02, 0.5, 0.2, 1, 4, 77);
  aso.n_visible = shard.visible_count;
  ClientState prox = make_client(0, w0, 0.02, 0.5, 0.2, 1, 4, 77);
  prox.n_visible = shard.visible_count;

  // Round 1: h = grad_s_prev = 0, so the balanced gradient is the surrogate
  // gradient and both algorithms take the same single step.
  const LocalStepResult r1a = local_step(aso, w0, spec, shard);
  const LocalStepResult r1p = local_step_fedprox(prox, w0, spec, shard);
  CHECK(r1a.w_new == r1p.w_new);

  // Round 2 from a common point: the balancing terms now differ from zero.
  const LocalStepResult r2a = local_step(aso, r1a.w_new, spec, shard);
  const LocalStepResult r2p = local_step_fedprox(prox, r1p.w_new, spec, shard);
  CHECK_FALSE(r2a.w_new == r2p.w_new);
}

TEST_CASE("dynamic step multiplier scales the applied step") {
  const ModelSpec spec = linear_spec(2);
  const ParamSet w0 = init_params(spec, 31);
  const ClientShard shard = regression_shard(4, 2, 3);

  ClientState slow = make_client(0, w0, 0.01, 0.0, 0.0, 1, 4, 5);
  slow.n_visible = shard.visible_count;
  ClientState fast = slow;
  fast.r_multiplier = 3.0;

  const LocalStepResult rs = local_step(slow, w0, spec, shard);
  const LocalStepResult rf = local_step(fast, w0, spec, shard);
  // One shuffled batch -> identical gradient; the fast client moves 3x as far.
  ParamSet delta_slow = rs.w_new;
  axpy(delta_slow, -1.0, w0);
  ParamSet delta_fast = rf.w_new;
  axpy(delta_fast, -1.0, w0);
  axpy(delta_fast, -3.0, delta_slow);
  CHECK(delta_fast.norm() <= 1e-15);

  ClientState off = make_client(0, w0, 0.01, 0.0, 0.0, 1, 4, 5);
  off.n_visible = shard.visible_count;
  off.dynamic_step = false;
  off.r_multiplier = 3.0;  // must be ignored
  const LocalStepResult ro = local_step(off, w0, spec, shard);
  CHECK(ro.w_new == rs.w_new);
}

TEST_CASE("algorithm and ordering names round-trip") {
  CHECK(local_algo_from_string("asofed") == LocalAlgo::kAsoFed);
  CHECK(local_algo_from_string("fedavg") == LocalAlgo::kFedAvg);
  CHECK(local_algo_from_string("fedprox") == LocalAlgo::kFedProx);
  CHECK(local_algo_from_string("fedasync") == LocalAlgo::kFedAsync);
  CHECK(to_string(LocalAlgo::kAsoFed) == "asofed");
  CHECK_THROWS_AS(local_algo_from_string("sgd"), std::invalid_argument);
  CHECK(balance_ordering_from_string("fold_after") == BalanceOrdering::kHAfterBalance);
  CHECK(balance_ordering_from_string("fold_before") == BalanceOrdering::kHBeforeBalance);
  CHECK(to_string(BalanceOrdering::kHBeforeBalance) == "fold_before");
  CHECK_THROWS_AS(balance_ordering_from_string("other"), std::invalid_argument);
}
