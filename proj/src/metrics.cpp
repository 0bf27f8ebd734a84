#include "asofed/metrics.hpp"

#include "json.hpp"

#include <cmath>
#include <stdexcept>

namespace asofed {

RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& targets) {
  if (preds.empty() || preds.size() != targets.size()) {
    throw std::invalid_argument("regression_metrics: length mismatch or empty input");
  }
  double abs_sum = 0.0;
  double smape_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double err = std::abs(preds[i] - targets[i]);
    abs_sum += err;
    const double denom = (std::abs(preds[i]) + std::abs(targets[i])) / 2.0;
    if (denom > 0.0) smape_sum += err / denom;
    // 0/0 counts as a 0 term
  }
  const double n = static_cast<double>(preds.size());
  return {abs_sum / n, smape_sum / n};
}

ClassificationMetrics classification_metrics(const std::vector<int>& preds,
                                             const std::vector<int>& targets, int n_classes) {
  if (preds.empty() || preds.size() != targets.size()) {
    throw std::invalid_argument("classification_metrics: length mismatch or empty input");
  }
  if (n_classes < 1) throw std::invalid_argument("classification_metrics: n_classes < 1");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= n_classes || targets[i] < 0 || targets[i] >= n_classes) {
      throw std::invalid_argument("classification_metrics: label out of range");
    }
  }

  std::vector<long> tp(static_cast<std::size_t>(n_classes), 0);
  std::vector<long> pred_count(static_cast<std::size_t>(n_classes), 0);
  std::vector<long> true_count(static_cast<std::size_t>(n_classes), 0);
  long correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = static_cast<std::size_t>(preds[i]);
    const auto t = static_cast<std::size_t>(targets[i]);
    ++pred_count[p];
    ++true_count[t];
    if (p == t) {
      ++tp[p];
      ++correct;
    }
  }

  double prec_sum = 0.0;
  double rec_sum = 0.0;
  double f1_sum = 0.0;
  double ba_sum = 0.0;
  int ba_classes = 0;  // balanced accuracy averages over classes present in targets
  for (int c = 0; c < n_classes; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double prec = pred_count[ci] > 0 ? static_cast<double>(tp[ci]) / pred_count[ci] : 0.0;
    const double rec = true_count[ci] > 0 ? static_cast<double>(tp[ci]) / true_count[ci] : 0.0;
    prec_sum += prec;
    rec_sum += rec;
    f1_sum += (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    if (true_count[ci] > 0) {
      ba_sum += rec;
      ++ba_classes;
    }
  }

  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  m.precision = prec_sum / n_classes;
  m.recall = rec_sum / n_classes;
  m.f1 = f1_sum / n_classes;
  m.balanced_accuracy = ba_classes > 0 ? ba_sum / ba_classes : 0.0;
  return m;
}

std::optional<double> time_to_target(const std::vector<RunRecord>& records,
                                     const std::string& metric_name, double target,
                                     bool higher_is_better) {
  for (const auto& rec : records) {
    const auto it = rec.test_metrics.find(metric_name);
    if (it == rec.test_metrics.end()) continue;
    const bool hit = higher_is_better ? it->second >= target : it->second <= target;
    if (hit) return rec.sim_time;
  }
  return std::nullopt;
}

std::string records_to_jsonl(const std::vector<RunRecord>& records) {
  std::string out;
  for (const RunRecord& rec : records) {
    nlohmann::ordered_json line;
    line["sim_time"] = rec.sim_time;
    line["iter"] = rec.global_iter;
    line["strategy"] = rec.strategy;
    line["seed"] = rec.seed;
    line["train_loss"] = rec.train_loss;
    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    for (const auto& [name, value] : rec.test_metrics) metrics[name] = value;
    line["metrics"] = metrics;
    out += line.dump();
    out += '\n';
  }
  return out;
}

}  // namespace asofed
