#include "asofed/server.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace asofed {
namespace {

void check_client_id(const ServerState& server, int client_id, const char* where) {
  if (client_id < 0 || client_id >= server.n_clients()) {
    throw std::invalid_argument(std::string(where) + ": unknown client " +
                                std::to_string(client_id));
  }
}

}  // namespace

ServerState make_server(const ParamSet& w_init, const std::vector<long>& initial_counts,
                        LocalAlgo strategy, double fedasync_alpha, double fedasync_a) {
  if (w_init.layer_count() == 0) throw std::invalid_argument("make_server: empty parameters");
  if (initial_counts.empty()) throw std::invalid_argument("make_server: no clients");
  for (long c : initial_counts) {
    if (c < 0) throw std::invalid_argument("make_server: negative sample count");
  }
  if (!(fedasync_alpha > 0.0 && fedasync_alpha <= 1.0)) {
    throw std::invalid_argument("make_server: fedasync_alpha must be in (0,1]");
  }
  if (fedasync_a < 0.0) throw std::invalid_argument("make_server: fedasync_a must be >= 0");

  ServerState server;
  server.w = w_init;
  server.sample_registry = initial_counts;
  server.n_total = std::accumulate(initial_counts.begin(), initial_counts.end(), 0l);
  if (server.n_total <= 0) throw std::invalid_argument("make_server: empty sample registry");
  server.strategy = strategy;
  server.fedasync_alpha = fedasync_alpha;
  server.fedasync_a = fedasync_a;
  server.dispatched.assign(initial_counts.size(), ParamSet());
  server.dispatch_iter.assign(initial_counts.size(), 0);
  return server;
}

const ParamSet& record_dispatch(ServerState& server, int client_id) {
  check_client_id(server, client_id, "record_dispatch");
  server.dispatched[client_id] = server.w;
  server.dispatch_iter[client_id] = server.t;
  return server.dispatched[client_id];
}

long dispatch_staleness(const ServerState& server, int client_id) {
  check_client_id(server, client_id, "dispatch_staleness");
  return server.t - server.dispatch_iter[client_id];
}

const ParamSet& aggregate_async(ServerState& server, int client_id, const ParamSet& w_k_new,
                                const ParamSet& w_k_sent, long n_k_now) {
  check_client_id(server, client_id, "aggregate_async");
  if (n_k_now <= 0) {
    throw std::invalid_argument("aggregate_async: client " + std::to_string(client_id) +
                                " reported no visible samples");
  }
  if (!server.w.same_signature(w_k_new) || !server.w.same_signature(w_k_sent)) {
    throw std::invalid_argument("aggregate_async: parameter shape mismatch");
  }

  server.n_total += n_k_now - server.sample_registry[client_id];
  server.sample_registry[client_id] = n_k_now;

  const double weight = static_cast<double>(n_k_now) / static_cast<double>(server.n_total);
  ParamSet delta = w_k_sent;
  axpy(delta, -1.0, w_k_new);
  axpy(server.w, -weight, delta);
  server.t += 1;
  return server.w;
}

void reweight_first_layer(ParamSet& params, bool columnwise) {
  Eigen::MatrixXd& layer = params.layer(params.first_layer_index());
  const Eigen::MatrixXd mag = layer.cwiseAbs();
  if (columnwise) {
    for (Eigen::Index j = 0; j < layer.cols(); ++j) {
      const double peak = mag.col(j).maxCoeff();
      const Eigen::VectorXd alpha = (mag.col(j).array() - peak).exp();
      layer.col(j) = layer.col(j).cwiseProduct(alpha / alpha.sum());
    }
  } else {
    for (Eigen::Index i = 0; i < layer.rows(); ++i) {
      const double peak = mag.row(i).maxCoeff();
      const Eigen::RowVectorXd alpha = (mag.row(i).array() - peak).exp();
      layer.row(i) = layer.row(i).cwiseProduct(alpha / alpha.sum());
    }
  }
}

const ParamSet& aggregate_sync_fedavg(ServerState& server,
                                      const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate_sync_fedavg: empty update list");
  long n_sum = 0;
  for (const ClientUpdate& u : updates) {
    check_client_id(server, u.client_id, "aggregate_sync_fedavg");
    if (u.n_k <= 0) {
      throw std::invalid_argument("aggregate_sync_fedavg: client " +
                                  std::to_string(u.client_id) + " reported no visible samples");
    }
    if (!server.w.same_signature(u.w_new)) {
      throw std::invalid_argument("aggregate_sync_fedavg: parameter shape mismatch");
    }
    n_sum += u.n_k;
  }

  ParamSet mean = ParamSet::zeros_like(server.w);
  for (const ClientUpdate& u : updates) {
    axpy(mean, static_cast<double>(u.n_k) / static_cast<double>(n_sum), u.w_new);
    server.n_total += u.n_k - server.sample_registry[u.client_id];
    server.sample_registry[u.client_id] = u.n_k;
  }
  server.w = std::move(mean);
  server.t += 1;
  return server.w;
}

const ParamSet& aggregate_fedasync(ServerState& server, const ParamSet& w_k_new,
                                   long staleness) {
  if (staleness < 0) throw std::invalid_argument("aggregate_fedasync: negative staleness");
  if (!server.w.same_signature(w_k_new)) {
    throw std::invalid_argument("aggregate_fedasync: parameter shape mismatch");
  }
  const double alpha_t =
      server.fedasync_alpha * std::pow(static_cast<double>(staleness) + 1.0, -server.fedasync_a);
  scale_add(server.w, 1.0 - alpha_t, alpha_t, w_k_new);
  server.t += 1;
  return server.w;
}

}  // namespace asofed
