#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace asofed {

/// One metrics snapshot, emitted per server aggregation.
struct RunRecord {
  double sim_time = 0.0;
  long global_iter = 0;
  double train_loss = 0.0;
  std::map<std::string, double> test_metrics;  // lowercase snake-case names
  std::string strategy;
  std::uint64_t seed = 0;
};

struct RegressionMetrics {
  double mae = 0.0;
  double smape = 0.0;
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;         // macro
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double balanced_accuracy = 0.0;
};

/// MAE and SMAPE. SMAPE uses the symmetric mean-of-magnitudes denominator,
/// |p - y| / ((|p| + |y|) / 2), with 0/0 terms counted as 0.
RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& targets);

/// Macro-averaged classification metrics. Per-class precision (or recall)
/// with an empty denominator counts as 0 so the macro averages stay finite.
ClassificationMetrics classification_metrics(const std::vector<int>& preds,
                                             const std::vector<int>& targets, int n_classes);

/// First sim_time whose `metric_name` value meets or beats the target
/// (>= when higher_is_better, <= otherwise). Records must be sorted by
/// sim_time. nullopt when the target is never reached.
std::optional<double> time_to_target(const std::vector<RunRecord>& records,
                                     const std::string& metric_name, double target,
                                     bool higher_is_better);

/// Serialize records as JSON lines with a fixed key order, shortest
/// round-trip number formatting, one record per line. Equal record
/// sequences always produce byte-identical text.
std::string records_to_jsonl(const std::vector<RunRecord>& records);

}  // namespace asofed
