#pragma once

#include "asofed/params.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace asofed {

enum class ModelFamily {
  kLinearRegression,        // squared-error loss
  kLogisticClassification,  // softmax cross-entropy
  kMlpOneHidden,            // tanh hidden layer, softmax cross-entropy
};

std::string to_string(ModelFamily family);
ModelFamily model_family_from_string(const std::string& name);

struct ModelSpec {
  ModelFamily family = ModelFamily::kLinearRegression;
  int input_dim = 1;
  int output_dim = 1;  // target dimension (regression) or class count
  int hidden_dim = 0;  // mlp only

  void validate() const;  // throws std::invalid_argument
  bool is_classification() const { return family != ModelFamily::kLinearRegression; }
};

/// One training/evaluation example. `target` is used by the regression
/// loss, `label` by the classification losses; the unused field is ignored.
struct Sample {
  Eigen::VectorXd features;
  Eigen::VectorXd target;
  int label = -1;
};

using Batch = std::span<const Sample>;

struct GradResult {
  ParamSet grad;
  double loss = 0.0;
  int n_samples = 0;
};

/// Uniform(-s, s) initialization with s = sqrt(6 / (rows + cols)) per layer,
/// deterministic in the seed.
///
/// Layer layout: linear/logistic hold {W (out x in), b (out x 1)}; the mlp
/// holds {W1 (hidden x in), b1, W2 (out x hidden), b2}. first_layer_index
/// always points at the weight matrix adjacent to the input.
ParamSet init_params(const ModelSpec& spec, std::uint64_t seed);

/// Mean loss over the batch and its exact analytic gradient.
GradResult loss_and_grad(const ModelSpec& spec, const ParamSet& params, Batch batch);

double loss_only(const ModelSpec& spec, const ParamSet& params, Batch batch);

/// Raw model outputs, one column per sample (predicted values for
/// regression, class scores for classification).
Eigen::MatrixXd predict(const ModelSpec& spec, const ParamSet& params, Batch batch);

std::vector<int> predict_classes(const ModelSpec& spec, const ParamSet& params, Batch batch);

}  // namespace asofed
