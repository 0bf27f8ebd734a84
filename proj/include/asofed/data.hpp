#pragma once

#include "asofed/models.hpp"
#include "asofed/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace asofed {

struct IdxIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IdxFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

/// One client's local data. The train/val/test partition is fixed for the
/// whole run; only the visible prefix of the train partition grows as the
/// simulated stream delivers new samples.
struct ClientShard {
  std::vector<Sample> samples;
  SplitIndices split;
  int visible_count = 0;     // prefix of split.train currently usable
  double growth_rate = 0.0;  // fraction of the train size added per iteration

  int total_count() const { return static_cast<int>(samples.size()); }
  int train_size() const { return static_cast<int>(split.train.size()); }
};

/// Grow the visible prefix by ceil(growth_rate * train size), capped at the
/// train size. No-op for a zero rate or a saturated shard.
void advance_stream(ClientShard& shard);

struct PartitionPlan {
  int n_clients = 0;
  std::vector<int> shard_sizes;                        // per shard
  std::vector<int> shard_label;                        // class label feeding each shard
  std::vector<std::vector<int>> shard_sample_indices;  // dataset indices per shard
  std::vector<std::vector<int>> client_shards;         // shard ids per client
};

/// Label-sorted non-IID partition: each class is cut into 4 contiguous
/// shards with sizes proportional to {2000, 2750, 3250, 4000} (rescaled to
/// the class count), and every client receives two shards of different
/// sizes. Requires n_clients == 2 * class count, except for the degenerate
/// single-client case which takes everything as one shard.
PartitionPlan partition_noniid(const std::vector<int>& labels, int n_clients, std::uint64_t seed);

struct Dataset {
  std::vector<Sample> samples;
  int n_classes = 0;
  int image_rows = 0;  // 0 when not image data
  int image_cols = 0;

  int feature_dim() const {
    return samples.empty() ? 0 : static_cast<int>(samples.front().features.size());
  }
  std::vector<int> labels() const;
};

/// IDX ingestion (big-endian): images magic 0x00000803 with rows x cols
/// unsigned bytes per record scaled to [0,1]; labels magic 0x00000801.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Bit-exact IDX writer for the same two-file layout load_idx reads.
void write_idx(const std::string& images_path, const std::string& labels_path,
               const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& labels,
               int rows, int cols);

/// Synthetic 10-class (configurable) image set: one fixed random template
/// per class plus per-pixel Gaussian noise, quantized to bytes so the data
/// round-trips through the IDX format unchanged.
Dataset synth_images(int n_samples, int n_classes, std::uint64_t seed, int rows = 28,
                     int cols = 28, double noise_std = 60.0);

struct SynthQuadraticOptions {
  int samples_per_client = 400;
  double noise_std = 0.1;
  double initial_fraction = 1.0;  // probes default to a static stream
  double growth_rate = 0.0;
};

/// Linear-regression shards with per-client optima w*_k = w* + delta_k,
/// ||delta_k|| = dissimilarity. A zero knob gives IID shards drawn from a
/// common optimum.
std::vector<ClientShard> synth_quadratic(int dim, int n_clients, double dissimilarity,
                                         std::uint64_t seed,
                                         const SynthQuadraticOptions& opts = {});

struct StreamOptions {
  double initial_fraction_min = 0.1;
  double initial_fraction_max = 0.5;
  double growth_min = 0.0005;
  double growth_max = 0.001;
};

/// Turn a partition plan into per-client shards: shuffle each client's
/// pooled samples, split 60/20/20, draw the initial visible fraction and
/// the growth rate from the configured ranges.
std::vector<ClientShard> materialize_shards(const Dataset& dataset, const PartitionPlan& plan,
                                            const StreamOptions& opts, rng::Stream& stream);

}  // namespace asofed
