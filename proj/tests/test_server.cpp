#include "doctest.h"

#include "asofed/client.hpp"
#include "asofed/server.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

using namespace asofed;

namespace {

ParamSet scalar(double v) {
  Eigen::MatrixXd m(1, 1);
  m << v;
  return ParamSet({m});
}

ParamSet row_params(std::initializer_list<double> values) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(values.size()));
  int i = 0;
  for (double v : values) m(0, i++) = v;
  return ParamSet({m});
}

}  // namespace

TEST_CASE("make_server seeds the registry and totals") {
  const ServerState server = make_server(scalar(1.0), {3, 5, 2});
  CHECK(server.n_clients() == 3);
  CHECK(server.n_total == 10);
  CHECK(server.t == 0);
  CHECK(server.w == scalar(1.0));
}

TEST_CASE("async aggregation applies the weighted delta against the dispatched copy") {
  ServerState server = make_server(scalar(1.0), {1});
  record_dispatch(server, 0);
  // Single client with full weight: w <- w - 1 * (w_sent - w_new) = w_new.
  aggregate_async(server, 0, scalar(3.0), server.dispatched[0], 1);
  CHECK(server.w == scalar(3.0));
  CHECK(server.t == 1);
}

TEST_CASE("async aggregation weights by the reporting client's sample share") {
  ServerState server = make_server(scalar(0.0), {1, 3});
  const ParamSet sent = record_dispatch(server, 0);
  // Client 0 holds 1 of 4 samples; its local move of -2 shifts the center by -0.5.
  aggregate_async(server, 0, scalar(-2.0), sent, 1);
  CHECK(server.w.layer(0)(0, 0) == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("async aggregation refreshes the sample registry") {
  ServerState server = make_server(scalar(0.0), {1, 3});
  const ParamSet sent = record_dispatch(server, 0);
  aggregate_async(server, 0, scalar(-2.0), sent, 5);  // client grew from 1 to 5 samples
  CHECK(server.n_total == 8);
  CHECK(server.sample_registry[0] == 5);
  // Weight used was 5/8.
  CHECK(server.w.layer(0)(0, 0) == doctest::Approx(-2.0 * 5.0 / 8.0).epsilon(1e-15));
}

TEST_CASE("dispatch staleness counts aggregations since the copy was handed out") {
  ServerState server = make_server(scalar(0.0), {1, 1});
  record_dispatch(server, 1);
  CHECK(dispatch_staleness(server, 1) == 0);
  const ParamSet sent0 = record_dispatch(server, 0);
  aggregate_async(server, 0, scalar(1.0), sent0, 1);
  CHECK(dispatch_staleness(server, 1) == 1);
}

TEST_CASE("sequential async sweep from one snapshot equals a FedAvg round") {
  // Both clients are dispatched the same w; applying their deltas one after
  // the other telescopes into the sample-weighted average of their results.
  const ParamSet w0 = row_params({1.0, -2.0, 0.5});
  const ParamSet w_a = row_params({2.0, -1.0, 0.25});
  const ParamSet w_b = row_params({-4.0, 3.0, 1.5});

  ServerState async_server = make_server(w0, {2, 6});
  const ParamSet sent_a = record_dispatch(async_server, 0);
  const ParamSet sent_b = record_dispatch(async_server, 1);
  aggregate_async(async_server, 0, w_a, sent_a, 2);
  aggregate_async(async_server, 1, w_b, sent_b, 6);

  ServerState sync_server = make_server(w0, {2, 6});
  aggregate_sync_fedavg(sync_server, {{0, w_a, 2}, {1, w_b, 6}});

  for (int i = 0; i < 3; ++i) {
    CHECK(async_server.w.layer(0)(0, i) ==
          doctest::Approx(sync_server.w.layer(0)(0, i)).epsilon(1e-14));
  }
}

TEST_CASE("fedavg aggregation is the sample-weighted mean") {
  ServerState server = make_server(scalar(9.0), {1, 3});
  aggregate_sync_fedavg(server, {{0, scalar(0.0), 1}, {1, scalar(4.0), 3}});
  CHECK(server.w.layer(0)(0, 0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(server.t == 1);
}

TEST_CASE("fedavg aggregation validates its updates") {
  ServerState server = make_server(scalar(0.0), {1, 1});
  CHECK_THROWS_AS(aggregate_sync_fedavg(server, {}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate_sync_fedavg(server, {{0, scalar(1.0), 0}}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate_sync_fedavg(server, {{5, scalar(1.0), 1}}), std::invalid_argument);
}

TEST_CASE("fedasync blends by staleness-discounted alpha") {
  ServerState server = make_server(scalar(0.0), {1}, LocalAlgo::kFedAsync, 0.6, 0.5);
  aggregate_fedasync(server, scalar(1.0), 0);
  CHECK(server.w.layer(0)(0, 0) == doctest::Approx(0.6).epsilon(1e-15));

  ServerState stale = make_server(scalar(0.0), {1}, LocalAlgo::kFedAsync, 0.6, 0.5);
  aggregate_fedasync(stale, scalar(1.0), 3);  // 0.6 * (3+1)^-0.5 = 0.3
  CHECK(stale.w.layer(0)(0, 0) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("first-layer reweighting matches the softmax oracle") {
  // Row (ln 3, 0): alpha = (3/4, 1/4), so entries become (0.75*ln3, 0).
  ParamSet params = row_params({std::log(3.0), 0.0});
  reweight_first_layer(params);
  CHECK(params.layer(0)(0, 0) == doctest::Approx(0.75 * std::log(3.0)).epsilon(1e-14));
  CHECK(params.layer(0)(0, 1) == 0.0);
}

TEST_CASE("reweighting uses magnitudes, preserving signs") {
  ParamSet params = row_params({-std::log(3.0), 0.0});
  reweight_first_layer(params);
  CHECK(params.layer(0)(0, 0) == doctest::Approx(-0.75 * std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("reweighting coefficients sum to one along each row") {
  rng::Stream stream(606);
  Eigen::MatrixXd w(6, 5);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 5; ++c) w(r, c) = stream.uniform(0.5, 3.0) * (stream.bernoulli(0.5) ? 1 : -1);
  }
  ParamSet params({w});
  ParamSet reweighted = params;
  reweight_first_layer(reweighted);
  for (int r = 0; r < 6; ++r) {
    double alpha_sum = 0.0;
    for (int c = 0; c < 5; ++c) alpha_sum += reweighted.layer(0)(r, c) / params.layer(0)(r, c);
    CHECK(alpha_sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("reweighting shrinks magnitudes and is stable for huge weights") {
  ParamSet params = row_params({900.0, 880.0, -850.0});  // exp would overflow without shifting
  reweight_first_layer(params);
  CHECK(params.all_finite());
  CHECK(std::abs(params.layer(0)(0, 0)) < 900.0);
  CHECK(std::abs(params.layer(0)(0, 1)) < 880.0);
}

TEST_CASE("column-wise reweighting normalizes down columns instead") {
  Eigen::MatrixXd w(2, 1);
  w << std::log(3.0), 0.0;
  ParamSet params({w});
  reweight_first_layer(params, true);
  CHECK(params.layer(0)(0, 0) == doctest::Approx(0.75 * std::log(3.0)).epsilon(1e-14));
  CHECK(params.layer(0)(1, 0) == 0.0);
}

TEST_CASE("reweighting touches only the first layer") {
  Eigen::MatrixXd w1(1, 2), w2(1, 2);
  w1 << std::log(3.0), 0.0;
  w2 << 5.0, -7.0;
  ParamSet params({w1, w2});
  reweight_first_layer(params);
  CHECK(params.layer(1)(0, 0) == 5.0);
  CHECK(params.layer(1)(0, 1) == -7.0);
}
