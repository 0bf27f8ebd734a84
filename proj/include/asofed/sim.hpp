#pragma once

#include "asofed/config.hpp"
#include "asofed/data.hpp"
#include "asofed/metrics.hpp"
#include "asofed/params.hpp"
#include "asofed/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace asofed {

struct Event {
  double time = 0.0;
  enum class Kind { kDispatch, kClientFinish, kUpdateArrive, kDataTick, kDropoutOn, kDropoutOff };
  Kind kind = Kind::kDispatch;
  int client_id = -1;
  long seq = 0;  // scheduling-order tie break: equal times process in schedule order
};

struct DelayModel {
  double base_delay = 10.0;          // per-client mean network delay (seconds)
  double jitter = 0.0;               // multiplicative noise half-range
  double compute_per_sample = 0.0;   // seconds per processed training sample
};

/// One round's duration: base_delay * uniform(1 - jitter, 1 + jitter) plus
/// compute time for n_samples processed samples. Always positive.
double sample_delay(const DelayModel& model, long n_samples, rng::Stream& stream);

struct DropoutPlan {
  double permanent_fraction = 0.0;
  double periodic_rate = 0.0;
};

/// Choose which clients stay silent for the whole run: exactly
/// round(permanent_fraction * n_clients) of them, drawn without replacement.
std::vector<bool> pick_permanent_dropouts(const DropoutPlan& plan, int n_clients,
                                          rng::Stream& stream);

/// Test hook: pin otherwise randomly drawn per-client quantities.
struct SimOverrides {
  std::vector<double> base_delays;  // one per client when non-empty
};

struct RunResult {
  std::vector<RunRecord> records;
  ParamSet final_params;
  long aggregations = 0;
  double final_sim_time = 0.0;
  std::map<std::string, double> final_metrics;  // evaluated at run end
  std::vector<double> base_delays;
  std::vector<bool> permanent_dropouts;
  long dropout_events = 0;  // periodic skip markers emitted
  long data_ticks = 0;
};

/// Execute one federated run under the configured strategy until the time
/// or aggregation cap. Asynchronous strategies aggregate per arriving
/// client update; synchronized ones per subset round that waits for its
/// slowest member. Deterministic for a fixed (config, seed).
RunResult run_simulation(const RunConfig& config,
                         std::optional<std::uint64_t> seed_override = std::nullopt,
                         const SimOverrides& overrides = {});

}  // namespace asofed
