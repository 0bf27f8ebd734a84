#pragma once

#include "asofed/client.hpp"
#include "asofed/params.hpp"

#include <cstdint>
#include <vector>

namespace asofed {

struct ServerState {
  ParamSet w;
  long t = 0;                         // global aggregation counter
  std::vector<long> sample_registry;  // latest reported visible count per client
  long n_total = 0;                   // running sum of the registry

  LocalAlgo strategy = LocalAlgo::kAsoFed;
  double fedasync_alpha = 0.6;
  double fedasync_a = 0.5;

  // Model copies handed out per client, kept so an asynchronous update can
  // be applied against exactly what the client started from.
  std::vector<ParamSet> dispatched;
  std::vector<long> dispatch_iter;

  int n_clients() const { return static_cast<int>(sample_registry.size()); }
};

/// Initialize the central model and seed the registry with every client's
/// starting visible count.
ServerState make_server(const ParamSet& w_init, const std::vector<long>& initial_counts,
                        LocalAlgo strategy = LocalAlgo::kAsoFed, double fedasync_alpha = 0.6,
                        double fedasync_a = 0.5);

/// Snapshot the current central model as the copy dispatched to `client_id`
/// and remember the iteration for staleness accounting. Returns the copy.
const ParamSet& record_dispatch(ServerState& server, int client_id);

/// Staleness of the most recent dispatch to `client_id` in aggregation counts.
long dispatch_staleness(const ServerState& server, int client_id);

/// Asynchronous aggregation: refresh the registry with the client's current
/// count, then w <- w - (n_k / N) * (w_sent - w_new) and t += 1.
/// Returns the new central model (before any feature re-weighting).
const ParamSet& aggregate_async(ServerState& server, int client_id, const ParamSet& w_k_new,
                                const ParamSet& w_k_sent, long n_k_now);

/// Magnitude-softmax re-weighting of the first layer: along each row
/// (or column when `columnwise`), alpha_j = exp(|w_j|) / sum_j exp(|w_j|)
/// and w_j <- alpha_j * w_j. Other layers are untouched. Computed with
/// max-subtraction so large weights cannot overflow.
void reweight_first_layer(ParamSet& params, bool columnwise = false);

struct ClientUpdate {
  int client_id = 0;
  ParamSet w_new;
  long n_k = 0;
};

/// Synchronized round: w <- sum(n_k * w_k) / sum(n_k) over the reporting
/// subset; registry entries for the subset are refreshed; t += 1.
const ParamSet& aggregate_sync_fedavg(ServerState& server,
                                      const std::vector<ClientUpdate>& updates);

/// Staleness-weighted average: w <- (1 - a_t) * w + a_t * w_new with
/// a_t = alpha * (staleness + 1)^(-a); t += 1.
const ParamSet& aggregate_fedasync(ServerState& server, const ParamSet& w_k_new, long staleness);

}  // namespace asofed
