#pragma once

// Experiment configuration files.
//
// The format is a small TOML subset: `[section]` headers, `key = value`
// lines, `#` comments. Values are numbers, booleans, double-quoted strings
// or flat arrays of numbers. A key may also be written fully dotted
// (`train.learning_rate = 0.01`) outside any section. Every diagnostic
// carries the offending line number.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsophia/data.hpp"
#include "fedsophia/federation.hpp"
#include "fedsophia/models.hpp"

namespace fedsophia {

struct DataSource {
  enum class Kind { kSynthetic, kIdx };

  Kind kind = Kind::kSynthetic;
  std::filesystem::path images;
  std::filesystem::path labels;
  /// Keep only the first `limit` IDX samples (0 keeps all).
  std::size_t limit = 0;

  std::size_t classes = 10;
  std::size_t per_class = 200;
  std::size_t dim = 784;
  double spread = 0.5;
  double separation = 1.0;
};

struct ExperimentConfig {
  TrainingConfig training;
  MlpSpec model{{784, 32, 10}};
  DataSource data;
  PartitionPlan partition{.device_count = 8};
  std::filesystem::path out_dir = "out";
};

/// One `key = value` entry, with the dotted key and the 1-based line it came from.
struct ConfigEntry {
  std::string value;
  int line = 0;
};

using ConfigEntries = std::map<std::string, ConfigEntry>;

/// Splits the text into dotted-key entries. Throws ConfigError on syntax errors
/// or duplicate keys.
ConfigEntries parse_config_entries(std::string_view text);

/// Builds and validates a configuration from entries. Unknown keys and
/// invalid values raise ConfigError with the entry's line. Short aliases
/// `eta` and `J` name train.learning_rate and train.local_iters.
ExperimentConfig build_config(const ConfigEntries& entries);

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Whether a dotted key names a configuration field.
bool is_known_key(std::string_view key);

/// Canonical dotted key for an alias; other keys are returned unchanged.
std::string canonical_key(std::string_view key);

/// Every field actually used, defaults included.
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

}  // namespace fedsophia
