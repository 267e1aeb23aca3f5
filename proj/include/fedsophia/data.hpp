#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fedsophia/linalg.hpp"
#include "fedsophia/models.hpp"

namespace fedsophia {

struct Dataset {
  DenseMatrix features;
  std::vector<Label> labels;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }

  Dataset subset(std::span<const std::size_t> indices) const;
  Batch as_batch() const { return {features, labels}; }
};

enum class PartitionScheme { kIid, kLabelShard };

struct PartitionPlan {
  std::size_t device_count = 32;
  PartitionScheme scheme = PartitionScheme::kLabelShard;
  std::size_t shards_per_device = 2;
  double train_fraction = 0.75;
  std::uint64_t seed = 0;

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

struct DeviceShard {
  Dataset train;
  Dataset test;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled by 1/255; each image is flattened into one feature row.
/// The class count is 1 + the largest label seen.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Gaussian clusters with isotropic standard deviation `spread`. Class c is
/// centred on sign_c * separation * e_{c/2}, sign_c = +1 for even c and -1
/// for odd c, so dim must be at least ceil(class_count / 2).
Dataset synthetic_blobs(std::size_t class_count, std::size_t per_class, std::size_t dim,
                        double spread, std::uint64_t seed, double separation = 1.0);

/// Splits a dataset over devices, then splits each device's samples into
/// train/test by plan.train_fraction.
///
/// iid: shuffle, then deal n / N consecutive samples to each device.
/// label-shard: sort by label (ties in shuffled order), cut into
/// N * shards_per_device equal contiguous shards, shuffle the shard order and
/// deal shards_per_device shards to each device. Leftover samples that do not
/// fill a whole shard are dropped.
std::vector<DeviceShard> partition(const Dataset& ds, const PartitionPlan& plan);

}  // namespace fedsophia
