#pragma once

#include "asofed/data.hpp"
#include "asofed/models.hpp"
#include "asofed/params.hpp"
#include "asofed/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace asofed {

struct NumericDivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// When the gradient-balancing accumulator is folded in relative to the
/// balanced-gradient computation. kHAfterBalance decays the accumulator
/// after the step uses it; kHBeforeBalance decays it first, which is the
/// variant that degenerates exactly to plain SGD at beta = 0.
enum class BalanceOrdering { kHAfterBalance, kHBeforeBalance };

std::string to_string(BalanceOrdering ordering);
BalanceOrdering balance_ordering_from_string(const std::string& name);

enum class LocalAlgo { kAsoFed, kFedAvg, kFedProx, kFedAsync };

std::string to_string(LocalAlgo algo);
LocalAlgo local_algo_from_string(const std::string& name);

struct ClientState {
  int id = 0;
  ParamSet w;            // local model copy
  ParamSet h;            // decayed-gradient balancer
  ParamSet v;            // previous surrogate gradient (decay source)
  ParamSet grad_s_prev;  // previous surrogate gradient (balancing reference)
  int n_visible = 0;
  std::vector<double> delay_history;
  double r_multiplier = 1.0;

  double base_lr = 0.001;
  double lambda = 0.5;
  double beta = 0.001;
  int local_epochs = 2;
  int batch_size = 32;
  bool dynamic_step = true;
  BalanceOrdering ordering = BalanceOrdering::kHAfterBalance;

  rng::Stream rng{0};
};

/// Build a client with zeroed accumulators and validated hyperparameters.
ClientState make_client(int id, const ParamSet& w_init, double base_lr, double lambda,
                        double beta, int local_epochs, int batch_size, std::uint64_t seed);

/// Gradient of the surrogate objective f_k(w_k) + (lambda/2)||w_k - w_server||^2
/// on one mini-batch; `loss` carries the plain data loss.
GradResult surrogate_grad(const ClientState& state, const ParamSet& w_server,
                          const ModelSpec& spec, Batch batch);

/// Balanced gradient: grad_s - grad_s_prev + h. Pure with respect to state;
/// the accumulators advance separately inside local_step. When h equals
/// grad_s_prev the two extra terms cancel algebraically, so grad_s is
/// returned as-is to keep that cancellation exact in floating point.
ParamSet balanced_grad(const ClientState& state, const ParamSet& grad_s);

/// Record one round duration and refresh the dynamic multiplier:
/// r = max(1, ln(mean of recorded durations)). Returns the new multiplier.
double update_multiplier(ClientState& state, double round_duration);

struct LocalStepResult {
  ParamSet w_new;
  double train_loss = 0.0;  // mean data loss across the round's steps
  long steps = 0;
  bool skipped = false;
};

/// One full local round: overwrite w_k with the server model, then run E
/// epochs of shuffled mini-batch steps w_k -= r * base_lr * balanced_grad.
/// Empty visible data yields a skipped result; non-finite parameters abort
/// the round with NumericDivergenceError.
LocalStepResult local_step(ClientState& state, const ParamSet& w_server, const ModelSpec& spec,
                           const ClientShard& shard);

/// Baseline local round: E epochs of plain SGD on f_k at base_lr.
LocalStepResult local_step_fedavg(ClientState& state, const ParamSet& w_server,
                                  const ModelSpec& spec, const ClientShard& shard);

/// Baseline local round: E epochs of SGD on f_k + (lambda/2)||w_k - w||^2.
LocalStepResult local_step_fedprox(ClientState& state, const ParamSet& w_server,
                                   const ModelSpec& spec, const ClientShard& shard);

}  // namespace asofed
