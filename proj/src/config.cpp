#include "asofed/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>

namespace asofed {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

long long parse_i64(const std::string& raw) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(raw, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + raw + "'");
  }
  if (used != raw.size()) throw ConfigError("expected an integer, got '" + raw + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& raw) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(raw, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a non-negative integer, got '" + raw + "'");
  }
  if (used != raw.size() || raw.find('-') != std::string::npos) {
    throw ConfigError("expected a non-negative integer, got '" + raw + "'");
  }
  return v;
}

double parse_f64(const std::string& raw) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(raw, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + raw + "'");
  }
  if (used != raw.size()) throw ConfigError("expected a number, got '" + raw + "'");
  return v;
}

bool parse_bool(const std::string& raw) {
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw ConfigError("expected true/false, got '" + raw + "'");
}

int parse_int_min(const std::string& raw, long long lo, const char* what) {
  const long long v = parse_i64(raw);
  if (v < lo) {
    throw ConfigError(std::string(what) + " must be >= " + std::to_string(lo));
  }
  return static_cast<int>(v);
}

double parse_f64_range(const std::string& raw, double lo, double hi, const char* what,
                       bool lo_open = false, bool hi_open = false) {
  const double v = parse_f64(raw);
  const bool below = lo_open ? v <= lo : v < lo;
  const bool above = hi_open ? v >= hi : v > hi;
  if (below || above) {
    std::ostringstream msg;
    msg << what << " must be in " << (lo_open ? '(' : '[') << lo << ", " << hi
        << (hi_open ? ')' : ']');
    throw ConfigError(msg.str());
  }
  return v;
}

std::string format_f64(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

struct KeyEntry {
  const char* name;
  const char* type;
  const char* doc;
  std::function<void(RunConfig&, const std::string&)> apply;
  std::function<std::string(const RunConfig&)> current;
};

const std::vector<KeyEntry>& key_catalog() {
  static const std::vector<KeyEntry> entries = {
      {"data.source", "enum", "dataset kind: synth_images | idx | quadratic",
       [](RunConfig& c, const std::string& v) { c.data.source = data_source_from_string(v); },
       [](const RunConfig& c) { return to_string(c.data.source); }},
      {"data.n_clients", "int", "number of federated clients",
       [](RunConfig& c, const std::string& v) {
         c.data.n_clients = parse_int_min(v, 1, "data.n_clients");
       },
       [](const RunConfig& c) { return std::to_string(c.data.n_clients); }},
      {"data.n_samples", "int", "synth_images: total corpus size",
       [](RunConfig& c, const std::string& v) {
         c.data.n_samples = parse_int_min(v, 1, "data.n_samples");
       },
       [](const RunConfig& c) { return std::to_string(c.data.n_samples); }},
      {"data.n_classes", "int", "synth_images: number of classes",
       [](RunConfig& c, const std::string& v) {
         c.data.n_classes = parse_int_min(v, 2, "data.n_classes");
       },
       [](const RunConfig& c) { return std::to_string(c.data.n_classes); }},
      {"data.images_path", "path", "idx: image file (env ASOFED_DATA_DIR-relative allowed)",
       [](RunConfig& c, const std::string& v) { c.data.images_path = v; },
       [](const RunConfig& c) { return c.data.images_path; }},
      {"data.labels_path", "path", "idx: label file",
       [](RunConfig& c, const std::string& v) { c.data.labels_path = v; },
       [](const RunConfig& c) { return c.data.labels_path; }},
      {"data.dim", "int", "quadratic: feature dimension",
       [](RunConfig& c, const std::string& v) { c.data.dim = parse_int_min(v, 1, "data.dim"); },
       [](const RunConfig& c) { return std::to_string(c.data.dim); }},
      {"data.samples_per_client", "int", "quadratic: samples per client",
       [](RunConfig& c, const std::string& v) {
         c.data.samples_per_client = parse_int_min(v, 5, "data.samples_per_client");
       },
       [](const RunConfig& c) { return std::to_string(c.data.samples_per_client); }},
      {"data.dissimilarity", "real", "quadratic: per-client optimum shift magnitude",
       [](RunConfig& c, const std::string& v) {
         c.data.dissimilarity = parse_f64(v);
         if (c.data.dissimilarity < 0) throw ConfigError("data.dissimilarity must be >= 0");
       },
       [](const RunConfig& c) { return format_f64(c.data.dissimilarity); }},
      {"data.noise_std", "real", "quadratic: label noise standard deviation",
       [](RunConfig& c, const std::string& v) {
         c.data.noise_std = parse_f64(v);
         if (c.data.noise_std < 0) throw ConfigError("data.noise_std must be >= 0");
       },
       [](const RunConfig& c) { return format_f64(c.data.noise_std); }},
      {"data.growth_min", "real", "per-iteration stream growth, lower bound (fraction of train size)",
       [](RunConfig& c, const std::string& v) {
         c.data.growth_min = parse_f64_range(v, 0.0, 1.0, "data.growth_min");
       },
       [](const RunConfig& c) { return format_f64(c.data.growth_min); }},
      {"data.growth_max", "real", "per-iteration stream growth, upper bound",
       [](RunConfig& c, const std::string& v) {
         c.data.growth_max = parse_f64_range(v, 0.0, 1.0, "data.growth_max");
       },
       [](const RunConfig& c) { return format_f64(c.data.growth_max); }},
      {"data.initial_fraction_min", "real", "initially visible share of each train split, lower bound",
       [](RunConfig& c, const std::string& v) {
         c.data.initial_fraction_min = parse_f64_range(v, 0.0, 1.0, "data.initial_fraction_min");
       },
       [](const RunConfig& c) { return format_f64(c.data.initial_fraction_min); }},
      {"data.initial_fraction_max", "real", "initially visible share, upper bound",
       [](RunConfig& c, const std::string& v) {
         c.data.initial_fraction_max = parse_f64_range(v, 0.0, 1.0, "data.initial_fraction_max");
       },
       [](const RunConfig& c) { return format_f64(c.data.initial_fraction_max); }},
      {"data.seed", "uint", "seed for data generation/partition/stream draws",
       [](RunConfig& c, const std::string& v) { c.data.seed = parse_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.data.seed); }},

      {"model.family", "enum", "linear | logistic | mlp",
       [](RunConfig& c, const std::string& v) { c.model.family = model_family_from_string(v); },
       [](const RunConfig& c) { return to_string(c.model.family); }},
      {"model.hidden", "int", "mlp hidden width",
       [](RunConfig& c, const std::string& v) {
         c.model.hidden = parse_int_min(v, 1, "model.hidden");
       },
       [](const RunConfig& c) { return std::to_string(c.model.hidden); }},

      {"client.lambda", "real", "proximal weight tying local models to the central one",
       [](RunConfig& c, const std::string& v) {
         c.client.lambda = parse_f64(v);
         if (c.client.lambda < 0) throw ConfigError("client.lambda must be >= 0");
       },
       [](const RunConfig& c) { return format_f64(c.client.lambda); }},
      {"client.beta", "real", "decay coefficient of the gradient balancer, in [0,1)",
       [](RunConfig& c, const std::string& v) {
         c.client.beta = parse_f64_range(v, 0.0, 1.0, "client.beta", false, true);
       },
       [](const RunConfig& c) { return format_f64(c.client.beta); }},
      {"client.base_lr", "real", "base learning rate",
       [](RunConfig& c, const std::string& v) {
         c.client.base_lr = parse_f64(v);
         if (!(c.client.base_lr > 0)) throw ConfigError("client.base_lr must be > 0");
       },
       [](const RunConfig& c) { return format_f64(c.client.base_lr); }},
      {"client.epochs", "int", "local epochs per round",
       [](RunConfig& c, const std::string& v) {
         c.client.epochs = parse_int_min(v, 1, "client.epochs");
       },
       [](const RunConfig& c) { return std::to_string(c.client.epochs); }},
      {"client.batch_size", "int", "mini-batch size",
       [](RunConfig& c, const std::string& v) {
         c.client.batch_size = parse_int_min(v, 1, "client.batch_size");
       },
       [](const RunConfig& c) { return std::to_string(c.client.batch_size); }},
      {"client.algorithm", "enum", "asofed | fedavg | fedprox | fedasync",
       [](RunConfig& c, const std::string& v) {
         c.client.algorithm = local_algo_from_string(v);
       },
       [](const RunConfig& c) { return to_string(c.client.algorithm); }},
      {"client.dynamic_step", "bool", "scale the step by the delay multiplier (disable for the fixed-step ablation)",
       [](RunConfig& c, const std::string& v) { c.client.dynamic_step = parse_bool(v); },
       [](const RunConfig& c) { return c.client.dynamic_step ? "true" : "false"; }},
      {"client.balance_ordering", "enum",
       "fold_after (listing order) | fold_before (recursion order; exact SGD at beta=0)",
       [](RunConfig& c, const std::string& v) {
         c.client.balance_ordering = balance_ordering_from_string(v);
       },
       [](const RunConfig& c) { return to_string(c.client.balance_ordering); }},

      {"server.strategy", "enum", "synonym of client.algorithm (last assignment wins)",
       [](RunConfig& c, const std::string& v) {
         c.client.algorithm = local_algo_from_string(v);
       },
       [](const RunConfig& c) { return to_string(c.client.algorithm); }},
      {"server.feature_reweight", "bool",
       "apply magnitude-softmax re-weighting to the first layer after each aggregation",
       [](RunConfig& c, const std::string& v) { c.server.feature_reweight = parse_bool(v); },
       [](const RunConfig& c) { return c.server.feature_reweight ? "true" : "false"; }},
      {"server.reweight_axis", "enum", "row | column normalization axis for the re-weighting",
       [](RunConfig& c, const std::string& v) {
         if (v == "row") {
           c.server.reweight_columns = false;
         } else if (v == "column") {
           c.server.reweight_columns = true;
         } else {
           throw ConfigError("server.reweight_axis must be row or column");
         }
       },
       [](const RunConfig& c) { return std::string(c.server.reweight_columns ? "column" : "row"); }},
      {"server.delta_base", "enum",
       "dispatched (apply deltas against the model each client received) | current",
       [](RunConfig& c, const std::string& v) {
         if (v == "dispatched") {
           c.server.delta_from_current = false;
         } else if (v == "current") {
           c.server.delta_from_current = true;
         } else {
           throw ConfigError("server.delta_base must be dispatched or current");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.server.delta_from_current ? "current" : "dispatched");
       }},
      {"server.fedavg_fraction", "real", "share C of clients sampled per synchronized round, in (0,1]",
       [](RunConfig& c, const std::string& v) {
         c.server.fedavg_fraction = parse_f64_range(v, 0.0, 1.0, "server.fedavg_fraction", true);
       },
       [](const RunConfig& c) { return format_f64(c.server.fedavg_fraction); }},
      {"server.fedasync_alpha", "real", "fedasync mixing weight at zero staleness, in (0,1]",
       [](RunConfig& c, const std::string& v) {
         c.server.fedasync_alpha = parse_f64_range(v, 0.0, 1.0, "server.fedasync_alpha", true);
       },
       [](const RunConfig& c) { return format_f64(c.server.fedasync_alpha); }},
      {"server.fedasync_a", "real", "fedasync staleness exponent (>= 0)",
       [](RunConfig& c, const std::string& v) {
         c.server.fedasync_a = parse_f64(v);
         if (c.server.fedasync_a < 0) throw ConfigError("server.fedasync_a must be >= 0");
       },
       [](const RunConfig& c) { return format_f64(c.server.fedasync_a); }},

      {"sim.max_sim_time", "real", "stop after this many simulated seconds (0 = no time cap)",
       [](RunConfig& c, const std::string& v) {
         c.sim.max_sim_time = parse_f64(v);
         if (c.sim.max_sim_time < 0) throw ConfigError("sim.max_sim_time must be >= 0");
       },
       [](const RunConfig& c) { return format_f64(c.sim.max_sim_time); }},
      {"sim.max_iter", "int", "stop after this many aggregations (0 = no count cap)",
       [](RunConfig& c, const std::string& v) {
         c.sim.max_iter = parse_int_min(v, 0, "sim.max_iter");
       },
       [](const RunConfig& c) { return std::to_string(c.sim.max_iter); }},
      {"sim.delay_min", "real", "per-client base network delay, lower bound (seconds)",
       [](RunConfig& c, const std::string& v) {
         c.sim.delay_min = parse_f64(v);
         if (!(c.sim.delay_min > 0)) throw ConfigError("sim.delay_min must be > 0");
       },
       [](const RunConfig& c) { return format_f64(c.sim.delay_min); }},
      {"sim.delay_max", "real", "per-client base network delay, upper bound (seconds)",
       [](RunConfig& c, const std::string& v) {
         c.sim.delay_max = parse_f64(v);
         if (!(c.sim.delay_max > 0)) throw ConfigError("sim.delay_max must be > 0");
       },
       [](const RunConfig& c) { return format_f64(c.sim.delay_max); }},
      {"sim.jitter", "real", "multiplicative delay noise half-range, in [0,1)",
       [](RunConfig& c, const std::string& v) {
         c.sim.jitter = parse_f64_range(v, 0.0, 1.0, "sim.jitter", false, true);
       },
       [](const RunConfig& c) { return format_f64(c.sim.jitter); }},
      {"sim.compute_per_sample", "real", "compute seconds per processed sample",
       [](RunConfig& c, const std::string& v) {
         c.sim.compute_per_sample = parse_f64(v);
         if (c.sim.compute_per_sample < 0) throw ConfigError("sim.compute_per_sample must be >= 0");
       },
       [](const RunConfig& c) { return format_f64(c.sim.compute_per_sample); }},
      {"sim.dropout_permanent", "real", "fraction of clients silent for the whole run, in [0,1]",
       [](RunConfig& c, const std::string& v) {
         c.sim.dropout_permanent = parse_f64_range(v, 0.0, 1.0, "sim.dropout_permanent");
       },
       [](const RunConfig& c) { return format_f64(c.sim.dropout_permanent); }},
      {"sim.dropout_periodic", "real", "per-round probability a client skips, in [0,1]",
       [](RunConfig& c, const std::string& v) {
         c.sim.dropout_periodic = parse_f64_range(v, 0.0, 1.0, "sim.dropout_periodic");
       },
       [](const RunConfig& c) { return format_f64(c.sim.dropout_periodic); }},

      {"metrics.eval_interval", "real",
       "simulated seconds between test-set evaluations (0 = every aggregation)",
       [](RunConfig& c, const std::string& v) {
         c.metrics.eval_interval = parse_f64(v);
         if (c.metrics.eval_interval < 0) throw ConfigError("metrics.eval_interval must be >= 0");
       },
       [](const RunConfig& c) { return format_f64(c.metrics.eval_interval); }},
      {"metrics.target_metric", "string",
       "metric watched for time-to-target (accuracy, f1, precision, recall, balanced_accuracy, mae, smape)",
       [](RunConfig& c, const std::string& v) {
         metric_higher_is_better(v);  // validates the name
         c.metrics.target_metric = v;
       },
       [](const RunConfig& c) { return c.metrics.target_metric; }},
      {"metrics.target", "real", "target value for time-to-target bookkeeping",
       [](RunConfig& c, const std::string& v) { c.metrics.target = parse_f64(v); },
       [](const RunConfig& c) { return format_f64(c.metrics.target); }},
      {"metrics.test_subsample", "int", "cap on pooled test samples per evaluation (0 = all)",
       [](RunConfig& c, const std::string& v) {
         c.metrics.test_subsample = parse_int_min(v, 0, "metrics.test_subsample");
       },
       [](const RunConfig& c) { return std::to_string(c.metrics.test_subsample); }},

      {"probe.which", "enum", "lemma1 | thm1 | thm2 | dissimilarity",
       [](RunConfig& c, const std::string& v) {
         if (v != "lemma1" && v != "thm1" && v != "thm2" && v != "dissimilarity") {
           throw ConfigError("probe.which must be one of lemma1, thm1, thm2, dissimilarity");
         }
         c.probe.which = v;
       },
       [](const RunConfig& c) { return c.probe.which; }},
      {"probe.seeds", "int", "Monte-Carlo seeds for probe expectations",
       [](RunConfig& c, const std::string& v) {
         c.probe.seeds = parse_int_min(v, 1, "probe.seeds");
       },
       [](const RunConfig& c) { return std::to_string(c.probe.seeds); }},
      {"probe.iters", "int", "probe trajectory length (global iterations)",
       [](RunConfig& c, const std::string& v) {
         c.probe.iters = parse_int_min(v, 1, "probe.iters");
       },
       [](const RunConfig& c) { return std::to_string(c.probe.iters); }},
      {"probe.eta_scale", "real", "probe step size as a fraction of the admissible ceiling, in (0,1]",
       [](RunConfig& c, const std::string& v) {
         c.probe.eta_scale = parse_f64_range(v, 0.0, 1.0, "probe.eta_scale", true);
       },
       [](const RunConfig& c) { return format_f64(c.probe.eta_scale); }},
      {"probe.dim", "int", "probe objective dimension",
       [](RunConfig& c, const std::string& v) { c.probe.dim = parse_int_min(v, 1, "probe.dim"); },
       [](const RunConfig& c) { return std::to_string(c.probe.dim); }},
      {"probe.n_clients", "int", "probe federation size",
       [](RunConfig& c, const std::string& v) {
         c.probe.n_clients = parse_int_min(v, 1, "probe.n_clients");
       },
       [](const RunConfig& c) { return std::to_string(c.probe.n_clients); }},
      {"probe.dissimilarity", "real", "probe per-client optimum shift",
       [](RunConfig& c, const std::string& v) {
         c.probe.dissimilarity = parse_f64(v);
         if (c.probe.dissimilarity < 0) throw ConfigError("probe.dissimilarity must be >= 0");
       },
       [](const RunConfig& c) { return format_f64(c.probe.dissimilarity); }},

      {"seed", "uint", "master seed for client schedules and local training",
       [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"out_dir", "path", "output directory for records, summaries and snapshots",
       [](RunConfig& c, const std::string& v) { c.out_dir = v; },
       [](const RunConfig& c) { return c.out_dir; }},
  };
  return entries;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

const KeyEntry* find_key(const std::string& key) {
  for (const KeyEntry& entry : key_catalog()) {
    if (key == entry.name) return &entry;
  }
  return nullptr;
}

std::string nearest_key(const std::string& key) {
  std::size_t best = static_cast<std::size_t>(-1);
  std::string name;
  for (const KeyEntry& entry : key_catalog()) {
    const std::size_t d = edit_distance(key, entry.name);
    if (d < best) {
      best = d;
      name = entry.name;
    }
  }
  return name;
}

}  // namespace

std::string to_string(DataSource source) {
  switch (source) {
    case DataSource::kSynthImages: return "synth_images";
    case DataSource::kIdx: return "idx";
    case DataSource::kQuadratic: return "quadratic";
  }
  throw std::invalid_argument("unknown data source");
}

DataSource data_source_from_string(const std::string& name) {
  if (name == "synth_images") return DataSource::kSynthImages;
  if (name == "idx") return DataSource::kIdx;
  if (name == "quadratic") return DataSource::kQuadratic;
  throw ConfigError("unknown data source: " + name);
}

bool metric_higher_is_better(const std::string& metric_name) {
  if (metric_name == "accuracy" || metric_name == "f1" || metric_name == "precision" ||
      metric_name == "recall" || metric_name == "balanced_accuracy") {
    return true;
  }
  if (metric_name == "mae" || metric_name == "smape" || metric_name == "train_loss") {
    return false;
  }
  throw ConfigError("unknown metric name: " + metric_name);
}

void apply_key(RunConfig& config, const std::string& key, const std::string& value) {
  const KeyEntry* entry = find_key(key);
  if (entry == nullptr) {
    throw ConfigError("unknown key '" + key + "' (nearest is '" + nearest_key(key) + "')");
  }
  entry->apply(config, value);
}

std::string resolve_data_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  if (const char* root = std::getenv("ASOFED_DATA_DIR"); root != nullptr && *root != '\0') {
    const fs::path joined = fs::path(root) / path;
    if (fs::exists(joined)) return joined.string();
  }
  throw ConfigError("file not found: " + path);
}

void validate(const RunConfig& config) {
  if (config.data.growth_min > config.data.growth_max) {
    throw ConfigError("data.growth_min must be <= data.growth_max");
  }
  if (config.data.initial_fraction_min > config.data.initial_fraction_max) {
    throw ConfigError("data.initial_fraction_min must be <= data.initial_fraction_max");
  }
  if (config.sim.delay_min > config.sim.delay_max) {
    throw ConfigError("sim.delay_min must be <= sim.delay_max");
  }
  if (config.sim.max_sim_time <= 0 && config.sim.max_iter <= 0) {
    throw ConfigError("one of sim.max_sim_time or sim.max_iter must be positive");
  }
  if (config.data.source == DataSource::kIdx) {
    if (config.data.images_path.empty() || config.data.labels_path.empty()) {
      throw ConfigError("idx source needs data.images_path and data.labels_path");
    }
    resolve_data_path(config.data.images_path);
    resolve_data_path(config.data.labels_path);
  }
  if (config.data.source == DataSource::kSynthImages &&
      config.data.n_samples < 4 * config.data.n_classes) {
    throw ConfigError("data.n_samples too small for the class count");
  }
  // The label-sorted partition hands every client two shards, which pins the
  // client count to twice the class count (single-client runs excepted).
  if (config.data.source == DataSource::kSynthImages && config.data.n_clients != 1 &&
      config.data.n_clients != 2 * config.data.n_classes) {
    throw ConfigError("synth_images needs data.n_clients == 2 * data.n_classes (or 1)");
  }
  const bool regression_data = config.data.source == DataSource::kQuadratic;
  const bool regression_model = config.model.family == ModelFamily::kLinearRegression;
  if (regression_data != regression_model) {
    throw ConfigError(regression_data
                          ? "quadratic data needs model.family = linear"
                          : "image data needs model.family = logistic or mlp");
  }
  if (config.model.family == ModelFamily::kMlpOneHidden && config.model.hidden < 1) {
    throw ConfigError("model.hidden must be >= 1 for the mlp family");
  }
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    try {
      apply_key(config, key, value);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + err.what());
    }
  }
  validate(config);
  return config;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

void write_config_reference(std::ostream& out) {
  const RunConfig defaults;
  out << "# Configuration reference\n"
      << "# Format: flat `key = value` lines; '#' starts a comment.\n\n";
  for (const KeyEntry& entry : key_catalog()) {
    std::string def = entry.current(defaults);
    if (def.empty()) def = "(empty)";
    out << entry.name << "  [" << entry.type << ", default " << def << "]\n    " << entry.doc
        << "\n";
  }
}

}  // namespace asofed
