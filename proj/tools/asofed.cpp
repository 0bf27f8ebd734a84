// asofed: command-line front end for the federated-learning simulator.
//
// Subcommands:
//   run              one simulation; emits records.jsonl, summary.csv, params.bin
//   sweep            multi-seed / multi-strategy grid of runs
//   compare          side-by-side time-to-target table across strategies
//   probe            numerical checks of the convergence analysis
//   config-reference print every config key with type, default, and doc line
//
// Exit codes: 0 ok, 1 configuration/validation error, 2 runtime or numeric error.

#include "CLI11.hpp"
#include "json.hpp"

#include "asofed/client.hpp"
#include "asofed/config.hpp"
#include "asofed/metrics.hpp"
#include "asofed/models.hpp"
#include "asofed/sim.hpp"
#include "asofed/theory.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace asofed;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "Config file (flat key = value)");
  cmd->add_option("-s,--set", args.sets, "Override a config key, e.g. --set client.beta=0.01");
  cmd->add_option("--seed", args.seed, "Override the run seed");
  cmd->add_option("-o,--out", args.out_dir, "Override the output directory");
}

RunConfig build_config(const CommonArgs& args) {
  RunConfig config;
  if (!args.config_path.empty()) config = parse_config(args.config_path);
  for (const std::string& entry : args.sets) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + entry + "'");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    apply_key(config, trim(entry.substr(0, eq)), trim(entry.substr(eq + 1)));
  }
  if (args.seed) config.seed = *args.seed;
  if (args.out_dir) config.out_dir = *args.out_dir;
  validate(config);
  return config;
}

std::string num(double v) { return ordered_json(v).dump(); }

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_params(const fs::path& path, const ParamSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  params.serialize(out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void dump_first_layer_csv(const fs::path& path, const ParamSet& params) {
  const Eigen::MatrixXd& layer = params.layer(params.first_layer_index());
  std::string out;
  for (Eigen::Index r = 0; r < layer.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.cols(); ++c) {
      if (c > 0) out += ',';
      out += num(layer(r, c));
    }
    out += '\n';
  }
  write_text(path, out);
}

struct RunSummary {
  std::string strategy;
  std::uint64_t seed = 0;
  std::optional<double> time_to_target;
  double final_metric = 0.0;
  long aggregations = 0;
};

RunSummary summarize(const RunConfig& config, std::uint64_t seed, const RunResult& result) {
  RunSummary row;
  row.strategy = to_string(config.client.algorithm);
  row.seed = seed;
  row.time_to_target =
      time_to_target(result.records, config.metrics.target_metric, config.metrics.target,
                     metric_higher_is_better(config.metrics.target_metric));
  const auto it = result.final_metrics.find(config.metrics.target_metric);
  row.final_metric = it == result.final_metrics.end() ? 0.0 : it->second;
  row.aggregations = result.aggregations;
  return row;
}

std::string summary_csv(const RunConfig& config, const std::vector<RunSummary>& rows) {
  std::string out = "strategy,seed,sim_time_to_target,final_" + config.metrics.target_metric +
                    ",aggregations\n";
  for (const RunSummary& row : rows) {
    out += row.strategy + ',' + std::to_string(row.seed) + ',';
    out += row.time_to_target ? num(*row.time_to_target) : std::string("unreached");
    out += ',' + num(row.final_metric) + ',' + std::to_string(row.aggregations) + '\n';
  }
  return out;
}

void print_summary_line(const RunConfig& config, const RunSummary& row) {
  std::cout << row.strategy << " seed=" << row.seed << " aggregations=" << row.aggregations
            << " final_" << config.metrics.target_metric << "=" << num(row.final_metric)
            << " time_to_target="
            << (row.time_to_target ? num(*row.time_to_target) : std::string("unreached"))
            << '\n';
}

int cmd_run(const CommonArgs& args, const std::string& dump_first_layer) {
  const RunConfig config = build_config(args);
  const RunResult result = run_simulation(config);
  fs::create_directories(config.out_dir);
  write_text(fs::path(config.out_dir) / "records.jsonl", records_to_jsonl(result.records));
  const RunSummary row = summarize(config, config.seed, result);
  write_text(fs::path(config.out_dir) / "summary.csv", summary_csv(config, {row}));
  write_params(fs::path(config.out_dir) / "params.bin", result.final_params);
  if (!dump_first_layer.empty()) {
    dump_first_layer_csv(dump_first_layer, result.final_params);
  }
  print_summary_line(config, row);
  return 0;
}

std::vector<std::string> split_csv_list(const std::string& text) {
  std::vector<std::string> parts;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

int cmd_sweep(const CommonArgs& args, int n_seeds, const std::string& strategies_csv) {
  RunConfig base = build_config(args);
  std::vector<std::string> strategies = split_csv_list(strategies_csv);
  if (strategies.empty()) strategies.push_back(to_string(base.client.algorithm));

  std::vector<RunSummary> rows;
  for (const std::string& strategy : strategies) {
    for (int i = 0; i < n_seeds; ++i) {
      RunConfig config = base;
      config.client.algorithm = local_algo_from_string(strategy);
      config.seed = base.seed + static_cast<std::uint64_t>(i);
      const fs::path run_dir = fs::path(base.out_dir) / (strategy + "_seed" +
                                                         std::to_string(config.seed));
      config.out_dir = run_dir.string();
      const RunResult result = run_simulation(config);
      fs::create_directories(run_dir);
      write_text(run_dir / "records.jsonl", records_to_jsonl(result.records));
      write_params(run_dir / "params.bin", result.final_params);
      const RunSummary row = summarize(config, config.seed, result);
      rows.push_back(row);
      print_summary_line(config, row);
    }
  }
  fs::create_directories(base.out_dir);
  write_text(fs::path(base.out_dir) / "summary.csv", summary_csv(base, rows));
  std::cout << "summary: " << (fs::path(base.out_dir) / "summary.csv").string() << '\n';
  return 0;
}

int cmd_compare(const CommonArgs& args, int n_seeds, const std::string& strategies_csv) {
  RunConfig base = build_config(args);
  std::vector<std::string> strategies = split_csv_list(strategies_csv);
  if (strategies.size() < 2) {
    throw ConfigError("compare needs at least two strategies (--strategies a,b)");
  }

  std::vector<RunSummary> rows;
  for (int i = 0; i < n_seeds; ++i) {
    for (const std::string& strategy : strategies) {
      RunConfig config = base;
      config.client.algorithm = local_algo_from_string(strategy);
      config.seed = base.seed + static_cast<std::uint64_t>(i);
      rows.push_back(summarize(config, config.seed, run_simulation(config)));
    }
  }

  std::cout << "seed\tstrategy\ttime_to_" << base.metrics.target_metric << "="
            << num(base.metrics.target) << "\tfinal_" << base.metrics.target_metric
            << "\taggregations\n";
  for (const RunSummary& row : rows) {
    std::cout << row.seed << '\t' << row.strategy << '\t'
              << (row.time_to_target ? num(*row.time_to_target) : std::string("unreached"))
              << '\t' << num(row.final_metric) << '\t' << row.aggregations << '\n';
  }
  for (const std::string& strategy : strategies) {
    double time_sum = 0.0, metric_sum = 0.0;
    int reached = 0, count = 0;
    for (const RunSummary& row : rows) {
      if (row.strategy != strategy) continue;
      ++count;
      metric_sum += row.final_metric;
      if (row.time_to_target) {
        ++reached;
        time_sum += *row.time_to_target;
      }
    }
    std::cout << "mean\t" << strategy << '\t'
              << (reached > 0 ? num(time_sum / reached) : std::string("unreached"))
              << '\t' << num(metric_sum / std::max(count, 1)) << '\t'
              << "(reached " << reached << "/" << count << ")\n";
  }

  fs::create_directories(base.out_dir);
  write_text(fs::path(base.out_dir) / "compare.csv", summary_csv(base, rows));
  return 0;
}

ordered_json probe_dissimilarity(const RunConfig& config) {
  const auto& p = config.probe;
  QuadraticFixture fixture =
      make_quadratic_fixture(p.dim, p.n_clients, 0.0, p.dissimilarity, config.seed);
  rng::Stream stream(rng::splitmix64(config.seed ^ 0xd155u));
  const std::vector<ParamSet> probes = sample_box(fixture.w_star, 2.0, 32, stream);
  ordered_json report;
  report["which"] = "dissimilarity";
  report["dim"] = p.dim;
  report["n_clients"] = p.n_clients;
  report["shift"] = p.dissimilarity;
  report["n_probes"] = probes.size();
  report["v_hat"] = estimate_dissimilarity(fixture.fed, probes);
  report["eps_hat"] = estimate_alignment(fixture.fed, probes);
  report["pass"] = true;
  return report;
}

ordered_json probe_lemma1(const RunConfig& config) {
  const auto& p = config.probe;
  QuadraticFixture fixture = make_quadratic_fixture(p.dim, 1, 0.0, 0.0, config.seed);
  const QuadraticFn central(fixture.mean_hessian, flatten(fixture.w_star));
  const ConstantsEstimate curvature = estimate_curvature(central, fixture.w_star);
  rng::Stream stream(rng::splitmix64(config.seed ^ 0x1e44a1u));
  std::vector<ParamSet> points = sample_box(fixture.w_star, 3.0, 1000, stream);
  points.push_back(fixture.w_star);
  const GapBoundReport gap = check_gap_lower_bound(central, curvature.mu, 0.0, points);
  ordered_json report;
  report["which"] = "lemma1";
  report["mu"] = curvature.mu;
  report["L"] = curvature.L;
  report["n_points"] = gap.n_points;
  report["n_violations"] = gap.n_violations;
  report["max_violation"] = gap.max_violation;
  report["pass"] = gap.pass;
  return report;
}

ordered_json probe_thm1(const RunConfig& config) {
  const auto& p = config.probe;
  QuadraticFixture fixture = make_quadratic_fixture(p.dim, p.n_clients, 0.3, 0.0, config.seed);
  const QuadraticFn central(fixture.mean_hessian, flatten(fixture.w_star));
  const ConstantsEstimate curvature = estimate_curvature(central, fixture.w_star);
  rng::Stream stream(rng::splitmix64(config.seed ^ 0x707155u));
  const ParamSet w0 = sample_box(fixture.w_star, 2.0, 1, stream)[0];
  const ContractionReport rep =
      check_contraction_bound(fixture.fed, w0, fixture.w_star, fixture.f_star, curvature,
                              p.eta_scale, p.iters, p.seeds, config.seed);
  ordered_json report;
  report["which"] = "thm1";
  report["mu"] = rep.mu;
  report["L"] = rep.L;
  report["v_hat"] = rep.v_hat;
  report["eps_hat"] = rep.eps_hat;
  report["eta"] = rep.eta;
  report["step_ceiling"] = rep.ceiling;
  report["gamma_prime"] = rep.gamma_prime;
  report["certified"] = rep.certified;
  report["binding"] = rep.binding;
  report["first_violation_t"] = rep.first_violation_t;
  report["mean_gap"] = rep.mean_gap;
  report["bound"] = rep.bound;
  report["se_gap"] = rep.se_gap;
  report["pass"] = rep.pass;
  return report;
}

ordered_json probe_thm2(const RunConfig& config) {
  const auto& p = config.probe;
  TwoWellFixture fixture = make_twowell_fixture(p.dim, p.n_clients, 0.2, 1.0, config.seed);
  const ParamSet w0 = vec_params(Eigen::VectorXd::Constant(p.dim, 0.6));
  rng::Stream stream(rng::splitmix64(config.seed ^ 0x707255u));
  const double smoothness = estimate_smoothness_box(*fixture.base, w0, 0.6, 16, stream);
  const BudgetReport rep = check_descent_budget(fixture.fed, w0, fixture.f_min, smoothness,
                                                p.eta_scale, p.iters, p.seeds, config.seed);
  ordered_json report;
  report["which"] = "thm2";
  report["L"] = rep.L;
  report["v_hat"] = rep.v_hat;
  report["eps_hat"] = rep.eps_hat;
  report["eta"] = rep.eta;
  report["step_ceiling"] = rep.ceiling;
  report["certified"] = rep.certified;
  report["lhs"] = rep.lhs;
  report["se_lhs"] = rep.se_lhs;
  report["budget"] = rep.budget;
  report["pass"] = rep.pass;
  return report;
}

int cmd_probe(const CommonArgs& args, const std::string& which_flag) {
  RunConfig config = build_config(args);
  if (!which_flag.empty()) {
    apply_key(config, "probe.which", which_flag);
  }
  ordered_json report;
  if (config.probe.which == "dissimilarity") {
    report = probe_dissimilarity(config);
  } else if (config.probe.which == "lemma1") {
    report = probe_lemma1(config);
  } else if (config.probe.which == "thm1") {
    report = probe_thm1(config);
  } else if (config.probe.which == "thm2") {
    report = probe_thm2(config);
  } else {
    throw ConfigError("unknown probe '" + config.probe.which + "'");
  }
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  fs::create_directories(config.out_dir);
  write_text(fs::path(config.out_dir) / ("probe_" + config.probe.which + ".json"), text);
  if (!report["pass"].get<bool>()) {
    std::cerr << "probe '" << config.probe.which << "' FAILED its bound\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asofed: asynchronous online federated learning simulator"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, compare_args, probe_args;
  std::string dump_first_layer;
  int sweep_seeds = 1, compare_seeds = 3;
  std::string sweep_strategies, compare_strategies = "asofed,fedavg";
  std::string probe_which;

  CLI::App* run_cmd = app.add_subcommand("run", "Execute one simulation");
  add_common(run_cmd, run_args);
  run_cmd->add_option("--dump-first-layer", dump_first_layer,
                      "Also write the first-layer weight matrix to this CSV path");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run a seed/strategy grid");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--seeds", sweep_seeds, "Number of consecutive seeds")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--strategies", sweep_strategies,
                        "Comma-separated strategies (default: configured one)");

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "Time-to-target table across strategies");
  add_common(compare_cmd, compare_args);
  compare_cmd->add_option("--seeds", compare_seeds, "Number of consecutive seeds")
      ->check(CLI::PositiveNumber);
  compare_cmd->add_option("--strategies", compare_strategies, "Comma-separated strategies");

  CLI::App* probe_cmd = app.add_subcommand("probe", "Numerical convergence checks");
  add_common(probe_cmd, probe_args);
  probe_cmd->add_option("--which", probe_which,
                        "One of: lemma1, thm1, thm2, dissimilarity");

  CLI::App* reference_cmd =
      app.add_subcommand("config-reference", "Print all config keys with defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_args, dump_first_layer);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, sweep_seeds, sweep_strategies);
    if (compare_cmd->parsed()) return cmd_compare(compare_args, compare_seeds, compare_strategies);
    if (probe_cmd->parsed()) return cmd_probe(probe_args, probe_which);
    if (reference_cmd->parsed()) {
      write_config_reference(std::cout);
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
