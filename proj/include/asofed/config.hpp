#pragma once

#include "asofed/client.hpp"
#include "asofed/models.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace asofed {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class DataSource { kSynthImages, kIdx, kQuadratic };

std::string to_string(DataSource source);
DataSource data_source_from_string(const std::string& name);

struct RunConfig {
  struct Data {
    DataSource source = DataSource::kSynthImages;
    int n_clients = 20;
    int n_samples = 8000;  // synth_images corpus size
    int n_classes = 10;
    std::string images_path;  // idx source
    std::string labels_path;
    int dim = 10;  // quadratic source
    int samples_per_client = 400;
    double dissimilarity = 0.0;
    double noise_std = 0.1;
    double growth_min = 0.0005;
    double growth_max = 0.001;
    double initial_fraction_min = 0.1;
    double initial_fraction_max = 0.5;
    std::uint64_t seed = 7;
  } data;

  struct Model {
    ModelFamily family = ModelFamily::kMlpOneHidden;
    int hidden = 32;
  } model;

  struct Client {
    double lambda = 0.5;
    double beta = 0.001;
    double base_lr = 0.001;
    int epochs = 2;
    int batch_size = 32;
    LocalAlgo algorithm = LocalAlgo::kAsoFed;
    bool dynamic_step = true;
    BalanceOrdering balance_ordering = BalanceOrdering::kHAfterBalance;
  } client;

  struct Server {
    bool feature_reweight = true;
    bool reweight_columns = false;   // ablation: normalize down columns
    bool delta_from_current = false; // ablation: delta against current w, not dispatched copy
    double fedavg_fraction = 0.2;    // C: share of clients per synchronized round
    double fedasync_alpha = 0.6;
    double fedasync_a = 0.5;
  } server;

  struct Sim {
    double max_sim_time = 2500.0;
    long max_iter = 0;  // 0 = no aggregation-count cap
    double delay_min = 10.0;
    double delay_max = 100.0;
    double jitter = 0.1;
    double compute_per_sample = 0.0005;
    double dropout_permanent = 0.0;
    double dropout_periodic = 0.0;
  } sim;

  struct Metrics {
    double eval_interval = 50.0;  // sim-seconds between test evaluations; 0 = every aggregation
    std::string target_metric = "accuracy";
    double target = 0.8;
    int test_subsample = 0;  // 0 = evaluate on every test sample
  } metrics;

  struct Probe {
    std::string which = "dissimilarity";  // lemma1 | thm1 | thm2 | dissimilarity
    int seeds = 30;
    int iters = 60;
    double eta_scale = 0.9;  // step size as a fraction of the certified ceiling
    int dim = 6;
    int n_clients = 4;
    double dissimilarity = 0.0;
  } probe;

  std::uint64_t seed = 1;
  std::string out_dir = "out";
};

/// Parse a flat `key = value` file ('#' comments). Unknown keys fail with
/// the nearest valid key named; values are validated per key and then
/// cross-field rules are checked.
RunConfig parse_config(const std::string& path);

/// Parse from an already-loaded buffer (used by tests and sweeps).
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<memory>");

/// Set one dotted key on an existing config, re-running value validation.
void apply_key(RunConfig& config, const std::string& key, const std::string& value);

/// Cross-field validation; throws ConfigError naming the violated rule.
void validate(const RunConfig& config);

/// Emit the generated key reference (key, type, default, description).
void write_config_reference(std::ostream& out);

/// True when the named metric improves upward (accuracy-like) rather than
/// downward (error-like).
bool metric_higher_is_better(const std::string& metric_name);

/// Resolve a dataset file: as given if it exists, otherwise relative to
/// $ASOFED_DATA_DIR. Throws ConfigError when neither resolves.
std::string resolve_data_path(const std::string& path);

}  // namespace asofed
