#include "doctest.h"

#include "asofed/models.hpp"
#include "asofed/params.hpp"
#include "asofed/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

using namespace asofed;

namespace {

std::vector<Sample> random_batch(const ModelSpec& spec, int n, rng::Stream& stream) {
  std::vector<Sample> batch(n);
  for (Sample& s : batch) {
    s.features = Eigen::VectorXd::NullaryExpr(spec.input_dim,
                                              [&](Eigen::Index) { return stream.normal(); });
    if (spec.is_classification()) {
      s.label = stream.uniform_int(0, spec.output_dim - 1);
    } else {
      s.target = Eigen::VectorXd::NullaryExpr(spec.output_dim,
                                              [&](Eigen::Index) { return stream.normal(); });
    }
  }
  return batch;
}

double fd_relative_error(const ModelSpec& spec, const ParamSet& params, Batch batch,
                         double h = 1e-5) {
  const GradResult res = loss_and_grad(spec, params, batch);
  double diff_sq = 0.0;
  double fd_sq = 0.0;
  ParamSet p = params;
  for (int l = 0; l < p.layer_count(); ++l) {
    for (Eigen::Index r = 0; r < p.layer(l).rows(); ++r) {
      for (Eigen::Index c = 0; c < p.layer(l).cols(); ++c) {
        const double saved = p.layer(l)(r, c);
        p.layer(l)(r, c) = saved + h;
        const double up = loss_only(spec, p, batch);
        p.layer(l)(r, c) = saved - h;
        const double down = loss_only(spec, p, batch);
        p.layer(l)(r, c) = saved;
        const double fd = (up - down) / (2.0 * h);
        const double d = res.grad.layer(l)(r, c) - fd;
        diff_sq += d * d;
        fd_sq += fd * fd;
      }
    }
  }
  return std::sqrt(diff_sq) / std::max(std::sqrt(fd_sq), 1e-12);
}

ModelSpec random_spec(ModelFamily family, rng::Stream& stream) {
  ModelSpec spec;
  spec.family = family;
  spec.input_dim = stream.uniform_int(2, 7);
  spec.output_dim = family == ModelFamily::kLinearRegression ? stream.uniform_int(1, 3)
                                                             : stream.uniform_int(2, 5);
  spec.hidden_dim = family == ModelFamily::kMlpOneHidden ? stream.uniform_int(2, 6) : 0;
  return spec;
}

}  // namespace

TEST_CASE("init_params is deterministic in the seed and respects fan bounds") {
  ModelSpec spec{ModelFamily::kMlpOneHidden, 5, 3, 4};
  const ParamSet a = init_params(spec, 21);
  const ParamSet b = init_params(spec, 21);
  const ParamSet c = init_params(spec, 22);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (int l = 0; l < a.layer_count(); ++l) {
    const auto& m = a.layer(l);
    const double bound = std::sqrt(6.0 / (m.rows() + m.cols()));
    CHECK(m.cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  rng::Stream stream(91);
  for (ModelFamily family : {ModelFamily::kLinearRegression,
                             ModelFamily::kLogisticClassification, ModelFamily::kMlpOneHidden}) {
    for (int trial = 0; trial < 20; ++trial) {
      const ModelSpec spec = random_spec(family, stream);
      const ParamSet params = init_params(spec, stream.next_u64());
      const std::vector<Sample> batch = random_batch(spec, stream.uniform_int(1, 8), stream);
      CHECK(fd_relative_error(spec, params, batch) <= 1e-4);
    }
  }
}

TEST_CASE("linear regression loss and gradient oracle") {
  ModelSpec spec{ModelFamily::kLinearRegression, 1, 1, 0};
  Eigen::MatrixXd w(1, 1), b(1, 1);
  w << 1.0;
  b << 0.0;
  const ParamSet params({w, b});
  Sample s;
  s.features = Eigen::VectorXd::Constant(1, 2.0);
  s.target = Eigen::VectorXd::Constant(1, 1.0);
  const std::vector<Sample> batch{s};
  const GradResult res = loss_and_grad(spec, params, batch);
  CHECK(res.loss == doctest::Approx(0.5).epsilon(1e-12));   // 0.5 * (2-1)^2
  CHECK(res.grad.layer(0)(0, 0) == doctest::Approx(2.0));   // err * x
  CHECK(res.grad.layer(1)(0, 0) == doctest::Approx(1.0));   // err
  CHECK(res.n_samples == 1);
}

TEST_CASE("softmax loss at zero parameters equals log class count") {
  for (ModelFamily family :
       {ModelFamily::kLogisticClassification, ModelFamily::kMlpOneHidden}) {
    ModelSpec spec{family, 4, 3, family == ModelFamily::kMlpOneHidden ? 5 : 0};
    ParamSet params = init_params(spec, 3);
    params.set_zero();
    rng::Stream stream(17);
    const std::vector<Sample> batch = random_batch(spec, 6, stream);
    CHECK(loss_only(spec, params, batch) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
}

TEST_CASE("predict_classes matches the argmax of predict scores") {
  ModelSpec spec{ModelFamily::kLogisticClassification, 5, 4, 0};
  const ParamSet params = init_params(spec, 8);
  rng::Stream stream(77);
  const std::vector<Sample> batch = random_batch(spec, 10, stream);
  const Eigen::MatrixXd scores = predict(spec, params, batch);
  const std::vector<int> classes = predict_classes(spec, params, batch);
  REQUIRE(scores.cols() == 10);
  REQUIRE(classes.size() == 10);
  for (int i = 0; i < 10; ++i) {
    Eigen::Index best;
    scores.col(i).maxCoeff(&best);
    CHECK(classes[i] == static_cast<int>(best));
  }
}

TEST_CASE("loss_only agrees with loss_and_grad") {
  ModelSpec spec{ModelFamily::kMlpOneHidden, 4, 3, 5};
  const ParamSet params = init_params(spec, 5);
  rng::Stream stream(6);
  const std::vector<Sample> batch = random_batch(spec, 5, stream);
  CHECK(loss_only(spec, params, batch) ==
        doctest::Approx(loss_and_grad(spec, params, batch).loss).epsilon(1e-15));
}

TEST_CASE("spec validation rejects inconsistent dimensions") {
  ModelSpec bad{ModelFamily::kMlpOneHidden, 4, 3, 0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ModelSpec neg{ModelFamily::kLinearRegression, 0, 1, 0};
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

TEST_CASE("empty batch is rejected") {
  ModelSpec spec{ModelFamily::kLinearRegression, 2, 1, 0};
  const ParamSet params = init_params(spec, 1);
  const std::vector<Sample> batch;
  CHECK_THROWS_AS(loss_and_grad(spec, params, batch), std::invalid_argument);
}
