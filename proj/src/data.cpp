#include "fedsophia/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "fedsophia/errors.hpp"

namespace fedsophia {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::ifstream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw FormatError(path.string() + ": truncated header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open file");
  return in;
}

std::vector<unsigned char> read_payload(std::ifstream& in, std::size_t bytes,
                                        const std::filesystem::path& path) {
  std::vector<unsigned char> buf(bytes);
  if (bytes > 0 && !in.read(reinterpret_cast<char*>(buf.data()),
                            static_cast<std::streamsize>(bytes))) {
    throw FormatError(path.string() + ": truncated payload (expected " +
                      std::to_string(bytes) + " bytes)");
  }
  return buf;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = features.gather_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels[i]);
  out.class_count = class_count;
  return out;
}

void PartitionPlan::validate() const {
  if (device_count < 1) throw ConfigError("partition: device count must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("partition: train fraction must lie in (0, 1)");
  }
  if (shards_per_device < 1) throw ConfigError("partition: shards per device must be >= 1");
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  std::ifstream images = open_binary(images_path);
  if (read_be32(images, images_path) != kImageMagic) {
    throw FormatError(images_path.string() + ": bad magic, expected 0x00000803");
  }
  const std::size_t n_images = read_be32(images, images_path);
  const std::size_t rows = read_be32(images, images_path);
  const std::size_t cols = read_be32(images, images_path);
  const std::size_t dim = rows * cols;
  const auto pixels = read_payload(images, n_images * dim, images_path);

  std::ifstream labels = open_binary(labels_path);
  if (read_be32(labels, labels_path) != kLabelMagic) {
    throw FormatError(labels_path.string() + ": bad magic, expected 0x00000801");
  }
  const std::size_t n_labels = read_be32(labels, labels_path);
  if (n_labels != n_images) {
    throw ConsistencyError("image count " + std::to_string(n_images) +
                           " != label count " + std::to_string(n_labels));
  }
  const auto label_bytes = read_payload(labels, n_labels, labels_path);

  Dataset ds;
  std::vector<double> values(pixels.size());
  std::transform(pixels.begin(), pixels.end(), values.begin(),
                 [](unsigned char p) { return static_cast<double>(p) / 255.0; });
  ds.features = DenseMatrix(n_images, dim, std::move(values));
  ds.labels.assign(label_bytes.begin(), label_bytes.end());
  Label max_label = 0;
  for (Label y : ds.labels) max_label = std::max(max_label, y);
  ds.class_count = ds.labels.empty() ? 0 : max_label + 1;
  return ds;
}

Dataset synthetic_blobs(std::size_t class_count, std::size_t per_class, std::size_t dim,
                        double spread, std::uint64_t seed, double separation) {
  if (class_count < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (per_class < 1) throw ConfigError("synthetic data needs at least 1 sample per class");
  if (dim < (class_count + 1) / 2) {
    throw ConfigError("synthetic data dimension too small for " +
                      std::to_string(class_count) + " distinct class means");
  }
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = class_count * per_class;
  Dataset ds;
  ds.features = DenseMatrix(n, dim);
  ds.labels.resize(n);
  ds.class_count = class_count;
  // Samples are interleaved by class so any prefix is roughly balanced.
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t c = k % class_count;
    auto row = ds.features.row(k);
    for (double& v : row) v = spread * noise(rng);
    row[c / 2] += (c % 2 == 0) ? separation : -separation;
    ds.labels[k] = static_cast<Label>(c);
  }
  return ds;
}

std::vector<DeviceShard> partition(const Dataset& ds, const PartitionPlan& plan) {
  plan.validate();
  const std::size_t n = ds.size();
  const std::size_t devices = plan.device_count;
  if (n < devices) {
    throw CapacityError("partition: " + std::to_string(n) + " samples for " +
                        std::to_string(devices) + " devices");
  }
  Rng rng(plan.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> assigned(devices);
  if (plan.scheme == PartitionScheme::kIid) {
    const std::size_t per_device = n / devices;
    for (std::size_t d = 0; d < devices; ++d) {
      assigned[d].assign(order.begin() + static_cast<std::ptrdiff_t>(d * per_device),
                         order.begin() + static_cast<std::ptrdiff_t>((d + 1) * per_device));
    }
  } else {
    const std::size_t shards = devices * plan.shards_per_device;
    const std::size_t shard_size = n / shards;
    if (shard_size == 0) {
      throw CapacityError("partition: " + std::to_string(n) + " samples cannot fill " +
                          std::to_string(shards) + " label shards");
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ds.labels[a] < ds.labels[b]; });
    std::vector<std::size_t> shard_order(shards);
    std::iota(shard_order.begin(), shard_order.end(), std::size_t{0});
    std::shuffle(shard_order.begin(), shard_order.end(), rng);
    for (std::size_t d = 0; d < devices; ++d) {
      for (std::size_t s = 0; s < plan.shards_per_device; ++s) {
        const std::size_t shard = shard_order[d * plan.shards_per_device + s];
        auto first = order.begin() + static_cast<std::ptrdiff_t>(shard * shard_size);
        assigned[d].insert(assigned[d].end(), first,
                           first + static_cast<std::ptrdiff_t>(shard_size));
      }
      // Mix the device's shards so the train/test split sees every label it holds.
      std::shuffle(assigned[d].begin(), assigned[d].end(), rng);
    }
  }

  std::vector<DeviceShard> out;
  out.reserve(devices);
  for (const auto& idx : assigned) {
    const std::size_t size = idx.size();
    auto n_train = static_cast<std::size_t>(
        std::llround(plan.train_fraction * static_cast<double>(size)));
    n_train = std::clamp<std::size_t>(n_train, 1, size > 1 ? size - 1 : size);
    std::span<const std::size_t> all(idx);
    out.push_back({ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))});
  }
  return out;
}

}  // namespace fedsophia
