#include "asofed/client.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace asofed {
namespace {

enum class LocalMode { kBalanced, kPlain, kProx };

void add_proximal(ParamSet& grad, double lambda, const ParamSet& w_k, const ParamSet& w_server) {
  if (lambda == 0.0) return;
  axpy(grad, lambda, w_k);
  axpy(grad, -lambda, w_server);
}

void advance_h(ClientState& state) {
  scale_add(state.h, state.beta, 1.0 - state.beta, state.v);
}

LocalStepResult run_local_round(ClientState& state, const ParamSet& w_server,
                                const ModelSpec& spec, const ClientShard& shard,
                                LocalMode mode) {
  if (!state.w.same_signature(w_server)) {
    throw std::invalid_argument("local round: server/client parameter shape mismatch");
  }
  const int n_vis = std::min(state.n_visible, shard.train_size());
  LocalStepResult res;
  if (n_vis <= 0) {
    res.w_new = w_server;
    res.skipped = true;
    return res;
  }

  state.w = w_server;
  const double r =
      (mode == LocalMode::kBalanced && state.dynamic_step) ? state.r_multiplier : 1.0;
  const double scale = r * state.base_lr;

  std::vector<int> order(n_vis);
  std::vector<Sample> batch;
  batch.reserve(static_cast<std::size_t>(state.batch_size));
  double loss_sum = 0.0;

  for (int epoch = 0; epoch < state.local_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    state.rng.shuffle(order);
    for (int start = 0; start < n_vis; start += state.batch_size) {
      const int end = std::min(n_vis, start + state.batch_size);
      batch.clear();
      for (int i = start; i < end; ++i) {
        batch.push_back(shard.samples[shard.split.train[order[i]]]);
      }
      GradResult g = [&] {
        try {
          return loss_and_grad(spec, state.w, batch);
        } catch (const std::runtime_error& err) {
          // A non-finite loss is the same failure as non-finite parameters:
          // the local model blew up mid-round.
          throw NumericDivergenceError("client " + std::to_string(state.id) +
                                       " diverged at local step " +
                                       std::to_string(res.steps + 1) + ": " + err.what());
        }
      }();
      loss_sum += g.loss;
      if (mode != LocalMode::kPlain) {
        add_proximal(g.grad, state.lambda, state.w, w_server);
      }

      if (mode == LocalMode::kBalanced) {
        if (state.ordering == BalanceOrdering::kHBeforeBalance) advance_h(state);
        const ParamSet zeta = balanced_grad(state, g.grad);
        axpy(state.w, -scale, zeta);
        if (state.ordering == BalanceOrdering::kHAfterBalance) advance_h(state);
        state.v = g.grad;
        state.grad_s_prev = std::move(g.grad);
      } else {
        axpy(state.w, -scale, g.grad);
      }

      res.steps += 1;
      if (!state.w.all_finite()) {
        throw NumericDivergenceError("client " + std::to_string(state.id) +
                                     " diverged at local step " + std::to_string(res.steps));
      }
    }
  }

  res.train_loss = loss_sum / static_cast<double>(res.steps);
  res.w_new = state.w;
  return res;
}

}  // namespace

std::string to_string(BalanceOrdering ordering) {
  return ordering == BalanceOrdering::kHAfterBalance ? "fold_after" : "fold_before";
}

BalanceOrdering balance_ordering_from_string(const std::string& name) {
  if (name == "fold_after") return BalanceOrdering::kHAfterBalance;
  if (name == "fold_before") return BalanceOrdering::kHBeforeBalance;
  throw std::invalid_argument("unknown balance ordering: " + name);
}

std::string to_string(LocalAlgo algo) {
  switch (algo) {
    case LocalAlgo::kAsoFed: return "asofed";
    case LocalAlgo::kFedAvg: return "fedavg";
    case LocalAlgo::kFedProx: return "fedprox";
    case LocalAlgo::kFedAsync: return "fedasync";
  }
  throw std::invalid_argument("unknown local algorithm");
}

LocalAlgo local_algo_from_string(const std::string& name) {
  if (name == "asofed") return LocalAlgo::kAsoFed;
  if (name == "fedavg") return LocalAlgo::kFedAvg;
  if (name == "fedprox") return LocalAlgo::kFedProx;
  if (name == "fedasync") return LocalAlgo::kFedAsync;
  throw std::invalid_argument("unknown local algorithm: " + name);
}

ClientState make_client(int id, const ParamSet& w_init, double base_lr, double lambda,
                        double beta, int local_epochs, int batch_size, std::uint64_t seed) {
  if (id < 0) throw std::invalid_argument("make_client: negative id");
  if (w_init.layer_count() == 0) throw std::invalid_argument("make_client: empty parameters");
  if (!(base_lr > 0.0)) throw std::invalid_argument("make_client: base_lr must be > 0");
  if (lambda < 0.0) throw std::invalid_argument("make_client: lambda must be >= 0");
  if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("make_client: beta must be in [0,1)");
  if (local_epochs < 1) throw std::invalid_argument("make_client: local_epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("make_client: batch_size must be >= 1");

  ClientState state;
  state.id = id;
  state.w = w_init;
  state.h = ParamSet::zeros_like(w_init);
  state.v = ParamSet::zeros_like(w_init);
  state.grad_s_prev = ParamSet::zeros_like(w_init);
  state.base_lr = base_lr;
  state.lambda = lambda;
  state.beta = beta;
  state.local_epochs = local_epochs;
  state.batch_size = batch_size;
  state.rng = rng::Stream(seed);
  return state;
}

GradResult surrogate_grad(const ClientState& state, const ParamSet& w_server,
                          const ModelSpec& spec, Batch batch) {
  if (!state.w.same_signature(w_server)) {
    throw std::invalid_argument("surrogate_grad: parameter shape mismatch");
  }
  GradResult g = loss_and_grad(spec, state.w, batch);
  add_proximal(g.grad, state.lambda, state.w, w_server);
  return g;
}

ParamSet balanced_grad(const ClientState& state, const ParamSet& grad_s) {
  if (!grad_s.same_signature(state.h) || !grad_s.same_signature(state.grad_s_prev)) {
    throw std::invalid_argument("balanced_grad: parameter shape mismatch");
  }
  // -grad_s_prev and +h cancel exactly when equal; returning grad_s directly
  // keeps that cancellation free of floating-point residue.
  if (state.h == state.grad_s_prev) return grad_s;
  ParamSet zeta = grad_s;
  axpy(zeta, -1.0, state.grad_s_prev);
  axpy(zeta, 1.0, state.h);
  return zeta;
}

double update_multiplier(ClientState& state, double round_duration) {
  if (!(round_duration > 0.0) || !std::isfinite(round_duration)) {
    throw std::invalid_argument("update_multiplier: round duration must be positive");
  }
  state.delay_history.push_back(round_duration);
  const double mean =
      std::accumulate(state.delay_history.begin(), state.delay_history.end(), 0.0) /
      static_cast<double>(state.delay_history.size());
  state.r_multiplier = std::max(1.0, std::log(mean));
  return state.r_multiplier;
}

LocalStepResult local_step(ClientState& state, const ParamSet& w_server, const ModelSpec& spec,
                           const ClientShard& shard) {
  return run_local_round(state, w_server, spec, shard, LocalMode::kBalanced);
}

LocalStepResult local_step_fedavg(ClientState& state, const ParamSet& w_server,
                                  const ModelSpec& spec, const ClientShard& shard) {
  return run_local_round(state, w_server, spec, shard, LocalMode::kPlain);
}

LocalStepResult local_step_fedprox(ClientState& state, const ParamSet& w_server,
                                   const ModelSpec& spec, const ClientShard& shard) {
  return run_local_round(state, w_server, spec, shard, LocalMode::kProx);
}

}  // namespace asofed
