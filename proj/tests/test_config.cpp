#include "doctest.h"

#include "asofed/config.hpp"
#include "asofed/client.hpp"
#include "asofed/models.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

using namespace asofed;
namespace fs = std::filesystem;

TEST_CASE("empty config text yields validated defaults") {
  const RunConfig config = parse_config_text("");
  CHECK(config.data.n_clients == 20);
  CHECK(config.client.lambda == 0.5);
  CHECK(config.client.beta == 0.001);
  CHECK(config.client.base_lr == 0.001);
  CHECK(config.seed == 1);
  CHECK_NOTHROW(validate(config));
}

TEST_CASE("comments and blank lines are ignored") {
  const RunConfig config = parse_config_text(
      "# a comment\n"
      "\n"
      "client.beta = 0.01  # trailing comment\n"
      "   \t  \n"
      "seed = 42\n");
  CHECK(config.client.beta == 0.01);
  CHECK(config.seed == 42);
}

TEST_CASE("unknown keys fail with the nearest valid key named") {
  RunConfig config;
  try {
    apply_key(config, "client.bta", "0.1");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("client.bta") != std::string::npos);
    CHECK(msg.find("client.beta") != std::string::npos);
  }
}

TEST_CASE("range violations name the constraint") {
  RunConfig config;
  try {
    apply_key(config, "client.beta", "1.5");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("[0, 1)") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_key(config, "client.lambda", "-1"), ConfigError);
  CHECK_THROWS_AS(apply_key(config, "server.fedavg_fraction", "0"), ConfigError);
  CHECK_THROWS_AS(apply_key(config, "server.fedavg_fraction", "1.2"), ConfigError);
  CHECK_THROWS_AS(apply_key(config, "sim.dropout_permanent", "1.5"), ConfigError);
  CHECK_THROWS_AS(apply_key(config, "client.epochs", "0"), ConfigError);
  CHECK_THROWS_AS(apply_key(config, "client.base_lr", "not_a_number"), ConfigError);
}

TEST_CASE("parse errors carry the origin and line number") {
  try {
    (void)parse_config_text("seed = 1\n\nclient.beta = 2.0\n", "myfile.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("myfile.cfg:3") != std::string::npos);
  }
}

TEST_CASE("typed keys parse and land in the right fields") {
  RunConfig config;
  apply_key(config, "data.source", "quadratic");
  apply_key(config, "data.dim", "7");
  apply_key(config, "data.dissimilarity", "1.25");
  apply_key(config, "model.family", "logistic");
  apply_key(config, "client.algorithm", "fedprox");
  apply_key(config, "client.dynamic_step", "false");
  apply_key(config, "client.balance_ordering", "fold_before");
  apply_key(config, "server.feature_reweight", "true");
  apply_key(config, "sim.max_sim_time", "123.5");
  apply_key(config, "metrics.target_metric", "smape");
  apply_key(config, "out_dir", "results/x");
  CHECK(config.data.source == DataSource::kQuadratic);
  CHECK(config.data.dim == 7);
  CHECK(config.data.dissimilarity == 1.25);
  CHECK(config.model.family == ModelFamily::kLogisticClassification);
  CHECK(config.client.algorithm == LocalAlgo::kFedProx);
  CHECK_FALSE(config.client.dynamic_step);
  CHECK(config.client.balance_ordering == BalanceOrdering::kHBeforeBalance);
  CHECK(config.server.feature_reweight);
  CHECK(config.sim.max_sim_time == 123.5);
  CHECK(config.metrics.target_metric == "smape");
  CHECK(config.out_dir == "results/x");
}

TEST_CASE("server.strategy is a synonym for client.algorithm") {
  RunConfig config;
  apply_key(config, "server.strategy", "fedasync");
  CHECK(config.client.algorithm == LocalAlgo::kFedAsync);
  apply_key(config, "client.algorithm", "fedavg");
  CHECK(config.client.algorithm == LocalAlgo::kFedAvg);
}

TEST_CASE("value parsing requires full consumption") {
  RunConfig config;
  CHECK_THROWS_AS(apply_key(config, "data.dim", "7x"), ConfigError);
  CHECK_THROWS_AS(apply_key(config, "sim.max_sim_time", "1.5.2"), ConfigError);
  CHECK_THROWS_AS(apply_key(config, "client.dynamic_step", "maybe"), ConfigError);
}

TEST_CASE("cross-field validation catches incompatible data and model choices") {
  RunConfig config;
  apply_key(config, "data.source", "quadratic");
  apply_key(config, "model.family", "logistic");
  CHECK_THROWS_AS(validate(config), ConfigError);

  RunConfig images;
  apply_key(images, "model.family", "linear");
  CHECK_THROWS_AS(validate(images), ConfigError);

  RunConfig idx;
  apply_key(idx, "data.source", "idx");
  CHECK_THROWS_AS(validate(idx), ConfigError);  // missing file paths
}

TEST_CASE("non-IID image runs require clients = 2 * classes") {
  RunConfig config;
  apply_key(config, "data.n_clients", "7");
  CHECK_THROWS_AS(validate(config), ConfigError);
}

TEST_CASE("probe names are gated") {
  RunConfig config;
  CHECK_NOTHROW(apply_key(config, "probe.which", "lemma1"));
  CHECK_NOTHROW(apply_key(config, "probe.which", "thm1"));
  CHECK_NOTHROW(apply_key(config, "probe.which", "thm2"));
  CHECK_NOTHROW(apply_key(config, "probe.which", "dissimilarity"));
  CHECK_THROWS_AS(apply_key(config, "probe.which", "thm3"), ConfigError);
}

TEST_CASE("config reference lists every known key with its default") {
  std::ostringstream out;
  write_config_reference(out);
  const std::string text = out.str();
  for (const char* key :
       {"data.source", "data.n_clients", "client.lambda", "client.beta", "client.base_lr",
        "client.algorithm", "client.balance_ordering", "server.feature_reweight",
        "server.fedavg_fraction", "sim.max_sim_time", "sim.dropout_permanent",
        "metrics.target_metric", "probe.which", "seed", "out_dir"}) {
    CAPTURE(key);
    CHECK(text.find(key) != std::string::npos);
  }
  CHECK(text.find("0.001") != std::string::npos);  // client defaults are printed
}

TEST_CASE("config files parse from disk with defaults filled") {
  const fs::path path = fs::temp_directory_path() /
                        ("asofed_cfg_" + std::to_string(::getpid()) + ".cfg");
  {
    std::ofstream out(path);
    out << "# experiment\nclient.lambda = 1.0\ndata.source = quadratic\n";
    out << "model.family = linear\n";
  }
  const RunConfig config = parse_config(path.string());
  fs::remove(path);
  CHECK(config.client.lambda == 1.0);
  CHECK(config.data.source == DataSource::kQuadratic);
  CHECK(config.client.beta == 0.001);  // untouched default
  CHECK_THROWS_AS(parse_config("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("data paths resolve against ASOFED_DATA_DIR when not local") {
  const fs::path dir = fs::temp_directory_path() /
                       ("asofed_data_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  { std::ofstream(dir / "train.idx") << "x"; }

  ::setenv("ASOFED_DATA_DIR", dir.c_str(), 1);
  CHECK(resolve_data_path("train.idx") == (dir / "train.idx").string());
  CHECK_THROWS_AS(resolve_data_path("missing.idx"), ConfigError);
  ::unsetenv("ASOFED_DATA_DIR");
  CHECK_THROWS_AS(resolve_data_path("train.idx"), ConfigError);

  // Existing paths are taken verbatim.
  CHECK(resolve_data_path((dir / "train.idx").string()) == (dir / "train.idx").string());
  fs::remove_all(dir);
}
