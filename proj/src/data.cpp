#include "asofed/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace asofed {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803u;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801u;

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw IdxIoError("truncated idx header in " + path);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

Dataset dataset_from_bytes(const std::vector<std::uint8_t>& pixels,
                           const std::vector<std::uint8_t>& labels, int rows, int cols) {
  const int dim = rows * cols;
  const int n = static_cast<int>(labels.size());
  Dataset ds;
  ds.image_rows = rows;
  ds.image_cols = cols;
  ds.samples.resize(n);
  int max_label = 0;
  for (int i = 0; i < n; ++i) {
    Sample& s = ds.samples[i];
    s.features.resize(dim);
    for (int p = 0; p < dim; ++p) {
      s.features[p] = pixels[std::size_t(i) * dim + p] / 255.0;
    }
    s.label = labels[i];
    max_label = std::max(max_label, s.label);
  }
  ds.n_classes = max_label + 1;
  return ds;
}

/// Integer-proportional split of `total` across `weights` (largest-remainder
/// rounding, ties to the lower index). The parts always sum to `total`.
std::vector<int> apportion(int total, const std::vector<int>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  const int m = static_cast<int>(weights.size());
  std::vector<int> parts(m);
  std::vector<std::pair<double, int>> frac(m);
  int assigned = 0;
  for (int i = 0; i < m; ++i) {
    const double quota = total * weights[i] / wsum;
    parts[i] = static_cast<int>(std::floor(quota));
    frac[i] = {quota - parts[i], i};
    assigned += parts[i];
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int r = 0; r < total - assigned; ++r) parts[frac[r].second] += 1;
  return parts;
}

}  // namespace

void advance_stream(ClientShard& shard) {
  if (shard.growth_rate < 0.0) {
    throw std::invalid_argument("advance_stream: negative growth rate");
  }
  const int n_train = shard.train_size();
  if (shard.visible_count >= n_train) return;
  // Guard against ulp noise pushing an exact product (e.g. 0.001 * 1000)
  // over the next integer before ceiling.
  const int inc =
      std::max(0, static_cast<int>(std::ceil(shard.growth_rate * n_train - 1e-9)));
  shard.visible_count = std::min(n_train, shard.visible_count + inc);
}

PartitionPlan partition_noniid(const std::vector<int>& labels, int n_clients,
                               std::uint64_t seed) {
  if (labels.empty()) throw std::invalid_argument("partition_noniid: empty label set");
  if (n_clients < 1) throw std::invalid_argument("partition_noniid: n_clients must be >= 1");

  const int n = static_cast<int>(labels.size());
  int n_classes = 0;
  for (int lab : labels) {
    if (lab < 0) throw std::invalid_argument("partition_noniid: negative label");
    n_classes = std::max(n_classes, lab + 1);
  }
  std::vector<int> class_count(n_classes, 0);
  for (int lab : labels) class_count[lab] += 1;
  for (int c = 0; c < n_classes; ++c) {
    if (class_count[c] == 0) {
      throw std::invalid_argument("partition_noniid: class " + std::to_string(c) +
                                  " has no samples");
    }
  }

  PartitionPlan plan;
  plan.n_clients = n_clients;

  // Stable sort by label so each class occupies one contiguous run.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return labels[a] < labels[b]; });

  if (n_clients == 1) {
    plan.shard_sizes = {n};
    plan.shard_label = {-1};
    plan.shard_sample_indices = {order};
    plan.client_shards = {{0}};
    return plan;
  }

  if (n_clients != 2 * n_classes) {
    throw std::invalid_argument(
        "partition_noniid: need n_clients == 2 * class count (got " +
        std::to_string(n_clients) + " clients for " + std::to_string(n_classes) + " classes)");
  }
  const std::vector<int> size_weights = {2000, 2750, 3250, 4000};
  for (int c = 0; c < n_classes; ++c) {
    if (class_count[c] < static_cast<int>(size_weights.size())) {
      throw std::invalid_argument("partition_noniid: class " + std::to_string(c) +
                                  " too small to cut into shards");
    }
  }

  // Four shards per class, sizes proportional to the weight ladder.
  // size_groups[g] lists the shard of rank g from every class.
  std::vector<std::vector<int>> size_groups(size_weights.size());
  int cursor = 0;
  for (int c = 0; c < n_classes; ++c) {
    const std::vector<int> parts = apportion(class_count[c], size_weights);
    for (std::size_t g = 0; g < parts.size(); ++g) {
      const int shard_id = static_cast<int>(plan.shard_sizes.size());
      plan.shard_sizes.push_back(parts[g]);
      plan.shard_label.push_back(c);
      plan.shard_sample_indices.emplace_back(order.begin() + cursor,
                                             order.begin() + cursor + parts[g]);
      size_groups[g].push_back(shard_id);
      cursor += parts[g];
    }
  }

  // Pair small-with-large and mid-with-mid so every client sees two classes
  // and two shard sizes, with the pairing randomized across classes.
  rng::Stream stream(rng::splitmix64(seed ^ 0x9d1c03a6f5b27e44ull));
  for (auto& group : size_groups) stream.shuffle(group);
  plan.client_shards.resize(n_clients);
  for (int i = 0; i < n_classes; ++i) {
    plan.client_shards[i] = {size_groups[0][i], size_groups[3][i]};
    plan.client_shards[n_classes + i] = {size_groups[1][i], size_groups[2][i]};
  }
  return plan;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i].label;
  return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IdxIoError("cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IdxIoError("cannot open " + labels_path);

  const std::uint32_t img_magic = read_u32_be(img, images_path);
  if (img_magic != kIdxImagesMagic) {
    throw IdxFormatError("bad image magic in " + images_path);
  }
  const std::uint32_t n_images = read_u32_be(img, images_path);
  const std::uint32_t rows = read_u32_be(img, images_path);
  const std::uint32_t cols = read_u32_be(img, images_path);

  const std::uint32_t lab_magic = read_u32_be(lab, labels_path);
  if (lab_magic != kIdxLabelsMagic) {
    throw IdxFormatError("bad label magic in " + labels_path);
  }
  const std::uint32_t n_labels = read_u32_be(lab, labels_path);
  if (n_images != n_labels) {
    throw DataConsistencyError("image count " + std::to_string(n_images) +
                               " != label count " + std::to_string(n_labels));
  }
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) {
    throw IdxFormatError("implausible image dimensions in " + images_path);
  }

  std::vector<std::uint8_t> pixels(std::size_t(n_images) * rows * cols);
  img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (img.gcount() != static_cast<std::streamsize>(pixels.size())) {
    throw IdxIoError("truncated image data in " + images_path);
  }
  std::vector<std::uint8_t> labels(n_labels);
  lab.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (lab.gcount() != static_cast<std::streamsize>(labels.size())) {
    throw IdxIoError("truncated label data in " + labels_path);
  }
  return dataset_from_bytes(pixels, labels, static_cast<int>(rows), static_cast<int>(cols));
}

void write_idx(const std::string& images_path, const std::string& labels_path,
               const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& labels,
               int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("write_idx: bad dimensions");
  const std::size_t n = labels.size();
  if (pixels.size() != n * std::size_t(rows) * cols) {
    throw std::invalid_argument("write_idx: pixel buffer does not match label count");
  }
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw IdxIoError("cannot create " + images_path);
  write_u32_be(img, kIdxImagesMagic);
  write_u32_be(img, static_cast<std::uint32_t>(n));
  write_u32_be(img, static_cast<std::uint32_t>(rows));
  write_u32_be(img, static_cast<std::uint32_t>(cols));
  img.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!img) throw IdxIoError("failed writing " + images_path);

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw IdxIoError("cannot create " + labels_path);
  write_u32_be(lab, kIdxLabelsMagic);
  write_u32_be(lab, static_cast<std::uint32_t>(n));
  lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(n));
  if (!lab) throw IdxIoError("failed writing " + labels_path);
}

Dataset synth_images(int n_samples, int n_classes, std::uint64_t seed, int rows, int cols,
                     double noise_std) {
  if (n_samples < 1 || n_classes < 2 || rows < 1 || cols < 1) {
    throw std::invalid_argument("synth_images: bad dimensions");
  }
  const int dim = rows * cols;
  rng::Stream root(rng::splitmix64(seed ^ 0x41c64e6da3bc0074ull));

  std::vector<std::vector<std::uint8_t>> templates(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    rng::Stream ts = root.fork("template", static_cast<std::uint64_t>(c));
    templates[c].resize(dim);
    for (int p = 0; p < dim; ++p) {
      templates[c][p] = static_cast<std::uint8_t>(ts.uniform_int(0, 255));
    }
  }

  std::vector<std::uint8_t> pixels(std::size_t(n_samples) * dim);
  std::vector<std::uint8_t> labels(n_samples);
  rng::Stream noise = root.fork("noise");
  for (int i = 0; i < n_samples; ++i) {
    const int c = i % n_classes;
    labels[i] = static_cast<std::uint8_t>(c);
    for (int p = 0; p < dim; ++p) {
      const double v = templates[c][p] + noise_std * noise.normal();
      pixels[std::size_t(i) * dim + p] =
          static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
    }
  }
  return dataset_from_bytes(pixels, labels, rows, cols);
}

std::vector<ClientShard> synth_quadratic(int dim, int n_clients, double dissimilarity,
                                         std::uint64_t seed, const SynthQuadraticOptions& opts) {
  if (dim < 1 || n_clients < 1) throw std::invalid_argument("synth_quadratic: bad dimensions");
  if (dissimilarity < 0.0) throw std::invalid_argument("synth_quadratic: negative dissimilarity");
  if (opts.samples_per_client < 5) {
    throw std::invalid_argument("synth_quadratic: too few samples per client");
  }

  rng::Stream root(rng::splitmix64(seed ^ 0x7b0c915ed84fa621ull));
  Eigen::VectorXd w_star(dim);
  {
    rng::Stream ws = root.fork("optimum");
    for (int i = 0; i < dim; ++i) w_star[i] = ws.normal();
  }

  std::vector<ClientShard> shards(n_clients);
  for (int k = 0; k < n_clients; ++k) {
    Eigen::VectorXd w_k = w_star;
    if (dissimilarity > 0.0) {
      rng::Stream ds = root.fork("delta", static_cast<std::uint64_t>(k));
      Eigen::VectorXd delta(dim);
      for (int i = 0; i < dim; ++i) delta[i] = ds.normal();
      const double nrm = delta.norm();
      if (nrm < 1e-12) {
        delta.setZero();
        delta[0] = 1.0;
      } else {
        delta /= nrm;
      }
      w_k += dissimilarity * delta;
    }

    rng::Stream xs = root.fork("features", static_cast<std::uint64_t>(k));
    rng::Stream es = root.fork("label_noise", static_cast<std::uint64_t>(k));
    ClientShard& shard = shards[k];
    shard.samples.resize(opts.samples_per_client);
    for (int i = 0; i < opts.samples_per_client; ++i) {
      Sample& s = shard.samples[i];
      s.features.resize(dim);
      for (int j = 0; j < dim; ++j) s.features[j] = xs.normal();
      s.target.resize(1);
      s.target[0] = s.features.dot(w_k) + opts.noise_std * es.normal();
    }

    const int n = opts.samples_per_client;
    const int n_val = n / 5;
    const int n_test = n / 5;
    const int n_train = n - n_val - n_test;
    shard.split.train.resize(n_train);
    std::iota(shard.split.train.begin(), shard.split.train.end(), 0);
    shard.split.val.resize(n_val);
    std::iota(shard.split.val.begin(), shard.split.val.end(), n_train);
    shard.split.test.resize(n_test);
    std::iota(shard.split.test.begin(), shard.split.test.end(), n_train + n_val);
    shard.visible_count = std::clamp(
        static_cast<int>(std::llround(opts.initial_fraction * n_train)), 1, n_train);
    shard.growth_rate = opts.growth_rate;
  }
  return shards;
}

std::vector<ClientShard> materialize_shards(const Dataset& dataset, const PartitionPlan& plan,
                                            const StreamOptions& opts, rng::Stream& stream) {
  if (opts.initial_fraction_min < 0.0 || opts.initial_fraction_max > 1.0 ||
      opts.initial_fraction_min > opts.initial_fraction_max) {
    throw std::invalid_argument("materialize_shards: bad initial fraction range");
  }
  if (opts.growth_min < 0.0 || opts.growth_min > opts.growth_max) {
    throw std::invalid_argument("materialize_shards: bad growth range");
  }

  std::vector<ClientShard> shards(plan.n_clients);
  for (int k = 0; k < plan.n_clients; ++k) {
    std::vector<int> pool;
    for (int sid : plan.client_shards[k]) {
      const auto& idx = plan.shard_sample_indices.at(sid);
      pool.insert(pool.end(), idx.begin(), idx.end());
    }
    rng::Stream shuffler = stream.fork("shard_shuffle", static_cast<std::uint64_t>(k));
    shuffler.shuffle(pool);

    ClientShard& shard = shards[k];
    shard.samples.reserve(pool.size());
    for (int idx : pool) shard.samples.push_back(dataset.samples.at(idx));

    const int n = static_cast<int>(pool.size());
    const int n_val = n / 5;
    const int n_test = n / 5;
    const int n_train = n - n_val - n_test;
    if (n_train < 1) throw std::invalid_argument("materialize_shards: empty train split");
    shard.split.train.resize(n_train);
    std::iota(shard.split.train.begin(), shard.split.train.end(), 0);
    shard.split.val.resize(n_val);
    std::iota(shard.split.val.begin(), shard.split.val.end(), n_train);
    shard.split.test.resize(n_test);
    std::iota(shard.split.test.begin(), shard.split.test.end(), n_train + n_val);

    rng::Stream init = stream.fork("initial_visible", static_cast<std::uint64_t>(k));
    const double frac = init.uniform(opts.initial_fraction_min, opts.initial_fraction_max);
    shard.visible_count =
        std::clamp(static_cast<int>(std::llround(frac * n_train)), 1, n_train);
    rng::Stream growth = stream.fork("growth_rate", static_cast<std::uint64_t>(k));
    shard.growth_rate = growth.uniform(opts.growth_min, opts.growth_max);
  }
  return shards;
}

}  // namespace asofed
