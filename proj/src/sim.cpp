#include "asofed/sim.hpp"

#include "asofed/client.hpp"
#include "asofed/models.hpp"
#include "asofed/server.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace asofed {

double sample_delay(const DelayModel& model, long n_samples, rng::Stream& stream) {
  if (!(model.base_delay > 0.0)) throw std::invalid_argument("sample_delay: base_delay must be > 0");
  if (model.jitter < 0.0 || model.jitter >= 1.0) {
    throw std::invalid_argument("sample_delay: jitter must be in [0,1)");
  }
  if (model.compute_per_sample < 0.0 || n_samples < 0) {
    throw std::invalid_argument("sample_delay: negative compute term");
  }
  const double noise = stream.uniform(1.0 - model.jitter, 1.0 + model.jitter);
  return model.base_delay * noise + model.compute_per_sample * static_cast<double>(n_samples);
}

std::vector<bool> pick_permanent_dropouts(const DropoutPlan& plan, int n_clients,
                                          rng::Stream& stream) {
  if (plan.permanent_fraction < 0.0 || plan.permanent_fraction > 1.0 ||
      plan.periodic_rate < 0.0 || plan.periodic_rate > 1.0) {
    throw std::invalid_argument("dropout fractions must be in [0,1]");
  }
  if (n_clients < 1) throw std::invalid_argument("pick_permanent_dropouts: no clients");
  std::vector<bool> down(n_clients, false);
  const long n_perm = std::clamp<long>(
      std::llround(plan.permanent_fraction * n_clients), 0, n_clients);
  if (n_perm > 0) {
    std::vector<int> ids(n_clients);
    std::iota(ids.begin(), ids.end(), 0);
    stream.shuffle(ids);
    for (long i = 0; i < n_perm; ++i) down[ids[i]] = true;
  }
  return down;
}

namespace {

constexpr std::uint64_t kRunTag = 0x5eedf00d13572468ull;

// ceil() that tolerates products like 0.2 * 30 landing one ulp above the
// exact integer.
long robust_ceil(double x) { return static_cast<long>(std::ceil(x - 1e-9)); }

struct EventCompare {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

class Engine {
 public:
  Engine(const RunConfig& config, std::uint64_t seed, const SimOverrides& overrides)
      : cfg_(config), seed_(seed), root_(rng::splitmix64(seed ^ kRunTag)) {
    validate(cfg_);
    build_data();
    build_model();
    build_clients(overrides);
    build_test_pool();
  }

  RunResult run() {
    const LocalAlgo algo = cfg_.client.algorithm;
    if (algo == LocalAlgo::kFedAvg || algo == LocalAlgo::kFedProx) {
      run_sync(algo);
    } else {
      run_async(algo);
    }

    RunResult out;
    out.records = std::move(records_);
    out.final_params = server_.w;
    out.aggregations = server_.t;
    out.final_sim_time = clock_;
    evaluate_into(out.final_metrics);
    out.base_delays.reserve(delay_models_.size());
    for (const DelayModel& m : delay_models_) out.base_delays.push_back(m.base_delay);
    out.permanent_dropouts = perm_down_;
    out.dropout_events = dropout_events_;
    out.data_ticks = data_ticks_;
    return out;
  }

 private:
  void build_data() {
    switch (cfg_.data.source) {
      case DataSource::kQuadratic: {
        SynthQuadraticOptions opts;
        opts.samples_per_client = cfg_.data.samples_per_client;
        opts.noise_std = cfg_.data.noise_std;
        opts.initial_fraction = cfg_.data.initial_fraction_max;
        opts.growth_rate = cfg_.data.growth_max;
        shards_ = synth_quadratic(cfg_.data.dim, cfg_.data.n_clients, cfg_.data.dissimilarity,
                                  cfg_.data.seed, opts);
        n_classes_ = 0;
        input_dim_ = cfg_.data.dim;
        return;
      }
      case DataSource::kSynthImages:
      case DataSource::kIdx: {
        Dataset ds =
            cfg_.data.source == DataSource::kSynthImages
                ? synth_images(cfg_.data.n_samples, cfg_.data.n_classes, cfg_.data.seed)
                : load_idx(resolve_data_path(cfg_.data.images_path),
                           resolve_data_path(cfg_.data.labels_path));
        const PartitionPlan plan = partition_noniid(ds.labels(), cfg_.data.n_clients,
                                                    cfg_.data.seed);
        StreamOptions opts;
        opts.initial_fraction_min = cfg_.data.initial_fraction_min;
        opts.initial_fraction_max = cfg_.data.initial_fraction_max;
        opts.growth_min = cfg_.data.growth_min;
        opts.growth_max = cfg_.data.growth_max;
        rng::Stream data_stream(rng::splitmix64(cfg_.data.seed ^ 0x8c24d3b1f6e97a05ull));
        shards_ = materialize_shards(ds, plan, opts, data_stream);
        n_classes_ = ds.n_classes;
        input_dim_ = ds.feature_dim();
        return;
      }
    }
    throw std::invalid_argument("unknown data source");
  }

  void build_model() {
    spec_.family = cfg_.model.family;
    spec_.input_dim = input_dim_;
    spec_.output_dim = spec_.family == ModelFamily::kLinearRegression ? 1 : n_classes_;
    spec_.hidden_dim = spec_.family == ModelFamily::kMlpOneHidden ? cfg_.model.hidden : 0;
    spec_.validate();
  }

  void build_clients(const SimOverrides& overrides) {
    const int K = cfg_.data.n_clients;
    const ParamSet w_init = init_params(spec_, seed_);

    clients_.reserve(K);
    std::vector<long> counts(K);
    for (int k = 0; k < K; ++k) {
      ClientState state = make_client(k, w_init, cfg_.client.base_lr, cfg_.client.lambda,
                                      cfg_.client.beta, cfg_.client.epochs,
                                      cfg_.client.batch_size, root_.fork("client", k).seed());
      state.dynamic_step = cfg_.client.dynamic_step;
      state.ordering = cfg_.client.balance_ordering;
      state.n_visible = shards_[k].visible_count;
      counts[k] = shards_[k].visible_count;
      clients_.push_back(std::move(state));
    }

    server_ = make_server(w_init, counts, cfg_.client.algorithm, cfg_.server.fedasync_alpha,
                          cfg_.server.fedasync_a);

    if (!overrides.base_delays.empty() &&
        overrides.base_delays.size() != static_cast<std::size_t>(K)) {
      throw std::invalid_argument("base delay override count must match n_clients");
    }
    delay_models_.resize(K);
    for (int k = 0; k < K; ++k) {
      DelayModel& m = delay_models_[k];
      m.base_delay = overrides.base_delays.empty()
                         ? root_.fork("delay_base", k).uniform(cfg_.sim.delay_min,
                                                               cfg_.sim.delay_max)
                         : overrides.base_delays[k];
      m.jitter = cfg_.sim.jitter;
      m.compute_per_sample = cfg_.sim.compute_per_sample;
      delay_streams_.push_back(root_.fork("delay", k));
      periodic_streams_.push_back(root_.fork("periodic", k));
    }

    DropoutPlan plan{cfg_.sim.dropout_permanent, cfg_.sim.dropout_periodic};
    rng::Stream perm_stream = root_.fork("permanent");
    perm_down_ = pick_permanent_dropouts(plan, K, perm_stream);
    subset_stream_ = root_.fork("subset");

    pending_.resize(K);
  }

  void build_test_pool() {
    for (const ClientShard& shard : shards_) {
      for (int idx : shard.split.test) test_pool_.push_back(shard.samples[idx]);
    }
    const int cap = cfg_.metrics.test_subsample;
    if (cap > 0 && static_cast<int>(test_pool_.size()) > cap) {
      std::vector<int> order(test_pool_.size());
      std::iota(order.begin(), order.end(), 0);
      rng::Stream pool_stream = root_.fork("test_pool");
      pool_stream.shuffle(order);
      std::vector<Sample> kept;
      kept.reserve(cap);
      for (int i = 0; i < cap; ++i) kept.push_back(std::move(test_pool_[order[i]]));
      test_pool_ = std::move(kept);
    }
  }

  void evaluate_into(std::map<std::string, double>& out) {
    out.clear();
    if (test_pool_.empty()) return;
    if (spec_.is_classification()) {
      const std::vector<int> preds = predict_classes(spec_, server_.w, test_pool_);
      std::vector<int> targets(test_pool_.size());
      for (std::size_t i = 0; i < test_pool_.size(); ++i) targets[i] = test_pool_[i].label;
      const ClassificationMetrics m = classification_metrics(preds, targets, n_classes_);
      out["accuracy"] = m.accuracy;
      out["f1"] = m.f1;
      out["precision"] = m.precision;
      out["recall"] = m.recall;
      out["balanced_accuracy"] = m.balanced_accuracy;
    } else {
      const Eigen::MatrixXd raw = predict(spec_, server_.w, test_pool_);
      std::vector<double> preds(test_pool_.size());
      std::vector<double> targets(test_pool_.size());
      for (std::size_t i = 0; i < test_pool_.size(); ++i) {
        preds[i] = raw(0, static_cast<Eigen::Index>(i));
        targets[i] = test_pool_[i].target[0];
      }
      const RegressionMetrics m = regression_metrics(preds, targets);
      out["mae"] = m.mae;
      out["smape"] = m.smape;
    }
  }

  void record(double time, double train_loss) {
    const bool due = cfg_.metrics.eval_interval == 0.0 || last_eval_time_ < 0.0 ||
                     time >= last_eval_time_ + cfg_.metrics.eval_interval;
    if (due) {
      evaluate_into(last_metrics_);
      last_eval_time_ = time;
    }
    RunRecord rec;
    rec.sim_time = time;
    rec.global_iter = server_.t;
    rec.train_loss = train_loss;
    rec.test_metrics = last_metrics_;
    rec.strategy = to_string(cfg_.client.algorithm);
    rec.seed = seed_;
    records_.push_back(std::move(rec));
  }

  bool hit_iter_cap() const { return cfg_.sim.max_iter > 0 && server_.t >= cfg_.sim.max_iter; }

  LocalStepResult run_local(int k, const ParamSet& w_sent, LocalAlgo algo) {
    try {
      switch (algo) {
        case LocalAlgo::kAsoFed:
          return local_step(clients_[k], w_sent, spec_, shards_[k]);
        case LocalAlgo::kFedAvg:
          return local_step_fedavg(clients_[k], w_sent, spec_, shards_[k]);
        case LocalAlgo::kFedProx:
        case LocalAlgo::kFedAsync:
          return local_step_fedprox(clients_[k], w_sent, spec_, shards_[k]);
      }
      throw std::invalid_argument("unknown local algorithm");
    } catch (const NumericDivergenceError& err) {
      throw NumericDivergenceError(std::string(err.what()) + " (global iteration " +
                                   std::to_string(server_.t) + ", sim time " +
                                   std::to_string(clock_) + ")");
    }
  }

  // ---- asynchronous strategies: aggregate per arriving update ----

  void schedule(double time, Event::Kind kind, int client_id) {
    queue_.push(Event{time, kind, client_id, seq_++});
  }

  void handle_dispatch(const Event& ev, LocalAlgo algo) {
    const int k = ev.client_id;
    if (cfg_.sim.dropout_periodic > 0.0 &&
        periodic_streams_[k].bernoulli(cfg_.sim.dropout_periodic)) {
      const double retry = ev.time + delay_models_[k].base_delay;
      schedule(ev.time, Event::Kind::kDropoutOn, k);
      schedule(retry, Event::Kind::kDropoutOff, k);
      schedule(retry, Event::Kind::kDispatch, k);
      return;
    }
    clients_[k].n_visible = shards_[k].visible_count;
    const long n_proc = static_cast<long>(cfg_.client.epochs) * clients_[k].n_visible;
    const double duration = sample_delay(delay_models_[k], n_proc, delay_streams_[k]);
    update_multiplier(clients_[k], duration);
    const ParamSet& w_sent = record_dispatch(server_, k);
    pending_[k] = run_local(k, w_sent, algo);
    schedule(ev.time + delay_models_[k].compute_per_sample * static_cast<double>(n_proc),
             Event::Kind::kClientFinish, k);
    schedule(ev.time + duration, Event::Kind::kUpdateArrive, k);
  }

  void handle_arrive(const Event& ev, LocalAlgo algo) {
    const int k = ev.client_id;
    const LocalStepResult& result = pending_[k];
    if (!result.skipped) {
      if (algo == LocalAlgo::kAsoFed) {
        const ParamSet& base =
            cfg_.server.delta_from_current ? server_.w : server_.dispatched[k];
        aggregate_async(server_, k, result.w_new, base, clients_[k].n_visible);
        if (cfg_.server.feature_reweight) {
          reweight_first_layer(server_.w, cfg_.server.reweight_columns);
        }
      } else {
        aggregate_fedasync(server_, result.w_new, dispatch_staleness(server_, k));
      }
      advance_stream(shards_[k]);
      schedule(ev.time, Event::Kind::kDataTick, k);
      record(ev.time, result.train_loss);
    }
    schedule(ev.time, Event::Kind::kDispatch, k);
  }

  void run_async(LocalAlgo algo) {
    for (int k = 0; k < cfg_.data.n_clients; ++k) {
      if (!perm_down_[k]) schedule(0.0, Event::Kind::kDispatch, k);
    }
    while (!queue_.empty()) {
      const Event ev = queue_.top();
      if (cfg_.sim.max_sim_time > 0.0 && ev.time > cfg_.sim.max_sim_time) break;
      if (hit_iter_cap()) break;
      queue_.pop();
      clock_ = std::max(clock_, ev.time);
      switch (ev.kind) {
        case Event::Kind::kDispatch: handle_dispatch(ev, algo); break;
        case Event::Kind::kUpdateArrive: handle_arrive(ev, algo); break;
        case Event::Kind::kClientFinish: break;
        case Event::Kind::kDataTick: data_ticks_ += 1; break;
        case Event::Kind::kDropoutOn: dropout_events_ += 1; break;
        case Event::Kind::kDropoutOff: break;
      }
    }
    if (cfg_.sim.max_sim_time > 0.0) clock_ = std::min(clock_, cfg_.sim.max_sim_time);
  }

  // ---- synchronized strategies: rounds wait for the slowest member ----

  void run_sync(LocalAlgo algo) {
    std::vector<int> live;
    for (int k = 0; k < cfg_.data.n_clients; ++k) {
      if (!perm_down_[k]) live.push_back(k);
    }
    if (live.empty()) return;
    const long want = robust_ceil(cfg_.server.fedavg_fraction * cfg_.data.n_clients);
    const std::size_t subset_size =
        static_cast<std::size_t>(std::clamp<long>(want, 1, static_cast<long>(live.size())));

    double now = 0.0;
    while (!(cfg_.sim.max_sim_time > 0.0 && now >= cfg_.sim.max_sim_time) && !hit_iter_cap()) {
      std::vector<int> pool = live;
      subset_stream_.shuffle(pool);
      pool.resize(subset_size);

      std::vector<ClientUpdate> updates;
      double round_time = 0.0;
      double fallback_time = 0.0;
      double loss_acc = 0.0;
      long n_acc = 0;
      for (int k : pool) {
        fallback_time = std::max(fallback_time, delay_models_[k].base_delay);
        if (cfg_.sim.dropout_periodic > 0.0 &&
            periodic_streams_[k].bernoulli(cfg_.sim.dropout_periodic)) {
          dropout_events_ += 1;
          continue;
        }
        clients_[k].n_visible = shards_[k].visible_count;
        const long n_proc = static_cast<long>(cfg_.client.epochs) * clients_[k].n_visible;
        const double duration = sample_delay(delay_models_[k], n_proc, delay_streams_[k]);
        const ParamSet& w_sent = record_dispatch(server_, k);
        LocalStepResult result = run_local(k, w_sent, algo);
        if (result.skipped) continue;
        round_time = std::max(round_time, duration);
        loss_acc += static_cast<double>(clients_[k].n_visible) * result.train_loss;
        n_acc += clients_[k].n_visible;
        updates.push_back(ClientUpdate{k, std::move(result.w_new),
                                       static_cast<long>(clients_[k].n_visible)});
      }

      if (updates.empty()) {
        // Every sampled member sat the round out; let the clock move past
        // the timeout so the run cannot spin in place.
        now += std::max(fallback_time, 1e-9);
        continue;
      }

      now += round_time;
      if (cfg_.sim.max_sim_time > 0.0 && now > cfg_.sim.max_sim_time) break;
      clock_ = now;
      aggregate_sync_fedavg(server_, updates);
      for (const ClientUpdate& u : updates) {
        advance_stream(shards_[u.client_id]);
        data_ticks_ += 1;
      }
      record(now, loss_acc / static_cast<double>(n_acc));
    }
  }

  RunConfig cfg_;
  std::uint64_t seed_;
  rng::Stream root_;

  ModelSpec spec_;
  int input_dim_ = 0;
  int n_classes_ = 0;
  std::vector<ClientShard> shards_;
  std::vector<ClientState> clients_;
  ServerState server_;
  std::vector<DelayModel> delay_models_;
  std::vector<rng::Stream> delay_streams_;
  std::vector<rng::Stream> periodic_streams_;
  rng::Stream subset_stream_{0};
  std::vector<bool> perm_down_;
  std::vector<LocalStepResult> pending_;
  std::vector<Sample> test_pool_;

  std::priority_queue<Event, std::vector<Event>, EventCompare> queue_;
  long seq_ = 0;
  double clock_ = 0.0;
  double last_eval_time_ = -1.0;
  std::map<std::string, double> last_metrics_;
  std::vector<RunRecord> records_;
  long dropout_events_ = 0;
  long data_ticks_ = 0;
};

}  // namespace

RunResult run_simulation(const RunConfig& config, std::optional<std::uint64_t> seed_override,
                         const SimOverrides& overrides) {
  const std::uint64_t seed = seed_override.value_or(config.seed);
  Engine engine(config, seed, overrides);
  return engine.run();
}

}  // namespace asofed
