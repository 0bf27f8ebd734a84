#include "asofed/models.hpp"

#include "asofed/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace asofed {

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::kLinearRegression: return "linear";
    case ModelFamily::kLogisticClassification: return "logistic";
    case ModelFamily::kMlpOneHidden: return "mlp";
  }
  return "?";
}

ModelFamily model_family_from_string(const std::string& name) {
  if (name == "linear") return ModelFamily::kLinearRegression;
  if (name == "logistic") return ModelFamily::kLogisticClassification;
  if (name == "mlp") return ModelFamily::kMlpOneHidden;
  throw std::invalid_argument("unknown model family: " + name);
}

void ModelSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("model: input_dim must be >= 1");
  if (output_dim < 1) throw std::invalid_argument("model: output_dim must be >= 1");
  if (is_classification() && output_dim < 2) {
    throw std::invalid_argument("model: classification needs >= 2 classes");
  }
  if (family == ModelFamily::kMlpOneHidden && hidden_dim < 1) {
    throw std::invalid_argument("model: hidden_dim must be >= 1 for mlp");
  }
}

namespace {

Eigen::MatrixXd uniform_layer(int rows, int cols, rng::Stream& stream) {
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = stream.uniform(-s, s);
  }
  return m;
}

void check_batch(const ModelSpec& spec, const ParamSet& params, Batch batch) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  for (const auto& s : batch) {
    if (s.features.size() != spec.input_dim) {
      throw std::invalid_argument("loss_and_grad: feature dimension mismatch");
    }
    if (spec.family == ModelFamily::kLinearRegression && s.target.size() != spec.output_dim) {
      throw std::invalid_argument("loss_and_grad: target dimension mismatch");
    }
    if (spec.is_classification() && (s.label < 0 || s.label >= spec.output_dim)) {
      throw std::invalid_argument("loss_and_grad: label out of range");
    }
  }
  const ParamSet ref = init_params(spec, 0);
  if (!params.same_signature(ref)) {
    throw std::invalid_argument("loss_and_grad: params do not match model spec");
  }
}

Eigen::MatrixXd feature_matrix(const ModelSpec& spec, Batch batch) {
  Eigen::MatrixXd x(spec.input_dim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = batch[i].features;
  return x;
}

// Column-wise softmax with per-column max subtraction.
Eigen::MatrixXd softmax_cols(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd p = z;
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    const double m = p.col(c).maxCoeff();
    p.col(c) = (p.col(c).array() - m).exp();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

}  // namespace

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  rng::Stream stream(rng::splitmix64(seed ^ 0x1f3a5c96d2e4b870ull));
  std::vector<Eigen::MatrixXd> layers;
  switch (spec.family) {
    case ModelFamily::kLinearRegression:
    case ModelFamily::kLogisticClassification:
      layers.push_back(uniform_layer(spec.output_dim, spec.input_dim, stream));
      layers.push_back(uniform_layer(spec.output_dim, 1, stream));
      break;
    case ModelFamily::kMlpOneHidden:
      layers.push_back(uniform_layer(spec.hidden_dim, spec.input_dim, stream));
      layers.push_back(uniform_layer(spec.hidden_dim, 1, stream));
      layers.push_back(uniform_layer(spec.output_dim, spec.hidden_dim, stream));
      layers.push_back(uniform_layer(spec.output_dim, 1, stream));
      break;
  }
  return ParamSet(std::move(layers), /*first_layer_index=*/0);
}

GradResult loss_and_grad(const ModelSpec& spec, const ParamSet& params, Batch batch) {
  check_batch(spec, params, batch);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::MatrixXd x = feature_matrix(spec, batch);

  GradResult out;
  out.n_samples = static_cast<int>(n);

  switch (spec.family) {
    case ModelFamily::kLinearRegression: {
      const Eigen::MatrixXd& w = params.layer(0);
      const Eigen::VectorXd b = params.layer(1).col(0);
      Eigen::MatrixXd y(spec.output_dim, n);
      for (Eigen::Index i = 0; i < n; ++i) y.col(i) = batch[static_cast<std::size_t>(i)].target;
      const Eigen::MatrixXd err = (w * x).colwise() + b - y;
      out.loss = 0.5 * inv_n * err.squaredNorm();
      std::vector<Eigen::MatrixXd> g;
      g.push_back(inv_n * (err * x.transpose()));
      g.push_back(inv_n * err.rowwise().sum());
      out.grad = ParamSet(std::move(g), 0);
      break;
    }
    case ModelFamily::kLogisticClassification: {
      const Eigen::MatrixXd& w = params.layer(0);
      const Eigen::VectorXd b = params.layer(1).col(0);
      const Eigen::MatrixXd z = (w * x).colwise() + b;
      Eigen::MatrixXd p = softmax_cols(z);
      double loss = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int label = batch[static_cast<std::size_t>(i)].label;
        loss -= std::log(std::max(p(label, i), 1e-300));
        p(label, i) -= 1.0;  // p now holds dLoss/dz * n
      }
      out.loss = loss * inv_n;
      std::vector<Eigen::MatrixXd> g;
      g.push_back(inv_n * (p * x.transpose()));
      g.push_back(inv_n * p.rowwise().sum());
      out.grad = ParamSet(std::move(g), 0);
      break;
    }
    case ModelFamily::kMlpOneHidden: {
      const Eigen::MatrixXd& w1 = params.layer(0);
      const Eigen::VectorXd b1 = params.layer(1).col(0);
      const Eigen::MatrixXd& w2 = params.layer(2);
      const Eigen::VectorXd b2 = params.layer(3).col(0);
      const Eigen::MatrixXd a = ((w1 * x).colwise() + b1).array().tanh();
      const Eigen::MatrixXd z = (w2 * a).colwise() + b2;
      Eigen::MatrixXd p = softmax_cols(z);
      double loss = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int label = batch[static_cast<std::size_t>(i)].label;
        loss -= std::log(std::max(p(label, i), 1e-300));
        p(label, i) -= 1.0;
      }
      out.loss = loss * inv_n;
      const Eigen::MatrixXd da =
          (w2.transpose() * p).cwiseProduct((1.0 - a.array().square()).matrix());
      std::vector<Eigen::MatrixXd> g;
      g.push_back(inv_n * (da * x.transpose()));
      g.push_back(inv_n * da.rowwise().sum());
      g.push_back(inv_n * (p * a.transpose()));
      g.push_back(inv_n * p.rowwise().sum());
      out.grad = ParamSet(std::move(g), 0);
      break;
    }
  }
  if (!std::isfinite(out.loss) || !out.grad.all_finite()) {
    throw std::runtime_error("loss_and_grad: non-finite result");
  }
  return out;
}

double loss_only(const ModelSpec& spec, const ParamSet& params, Batch batch) {
  return loss_and_grad(spec, params, batch).loss;
}

Eigen::MatrixXd predict(const ModelSpec& spec, const ParamSet& params, Batch batch) {
  if (batch.empty()) throw std::invalid_argument("predict: empty batch");
  const Eigen::MatrixXd x = feature_matrix(spec, batch);
  switch (spec.family) {
    case ModelFamily::kLinearRegression:
    case ModelFamily::kLogisticClassification: {
      return (params.layer(0) * x).colwise() + params.layer(1).col(0);
    }
    case ModelFamily::kMlpOneHidden: {
      const Eigen::MatrixXd a =
          ((params.layer(0) * x).colwise() + params.layer(1).col(0)).array().tanh();
      return (params.layer(2) * a).colwise() + params.layer(3).col(0);
    }
  }
  throw std::logic_error("predict: unreachable");
}

std::vector<int> predict_classes(const ModelSpec& spec, const ParamSet& params, Batch batch) {
  const Eigen::MatrixXd scores = predict(spec, params, batch);
  std::vector<int> labels(batch.size());
  for (Eigen::Index i = 0; i < scores.cols(); ++i) {
    Eigen::Index best = 0;
    scores.col(i).maxCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace asofed
