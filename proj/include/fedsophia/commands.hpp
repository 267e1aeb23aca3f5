#pragma once

// Subcommands behind the `fedsophia` executable. Each returns a process exit
// code: 0 on success, 1 on a runtime failure, 2 on invalid input.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fedsophia/config.hpp"
#include "fedsophia/federation.hpp"

namespace fedsophia {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kMetricsHeader = "round,accuracy,mean_loss,e_comp_j,e_tx_j,bits,seconds";

struct ExperimentRun {
  std::vector<RoundRecord> records;
  std::vector<EnergyLedger> device_ledgers;
  ParamVector final_model;
};

/// Loads or generates the configured dataset.
Dataset load_dataset(const ExperimentConfig& cfg);

/// Builds data, partition, model and devices from the configuration and runs
/// the federation. Seeds of every stream derive from training.seed.
ExperimentRun run_configured(const ExperimentConfig& cfg, const RoundCallback& on_round = {});

/// One metrics.csv row (no trailing newline).
std::string metrics_row(const RoundRecord& rec);

/// Reads a config file into raw entries. Throws ConfigError.
ConfigEntries load_config_entries(const std::filesystem::path& path);

struct RunOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> workers;
};

/// Writes metrics.csv, summary.json and resolved-config.json to the output directory.
int cmd_run(const RunOptions& opts, std::ostream& err);

/// Grid blocks look like "eta=0.01,0.003;J=10": the cross product inside a
/// block, blocks concatenated. The table preset runs the two learning-rate and
/// local-iteration blocks of the reference hyperparameter table.
int cmd_sweep(const RunOptions& opts, const std::vector<std::string>& grid_blocks,
              std::ostream& err);

/// The two grid blocks used by `sweep --preset table`.
std::vector<std::string> table_preset_grid();

struct SweepCell {
  std::vector<std::pair<std::string, std::string>> assignments;
};

/// Expands grid blocks into cells. Throws ConfigError on malformed blocks,
/// unknown keys or an empty grid.
std::vector<SweepCell> expand_grid(const std::vector<std::string>& grid_blocks);

int cmd_quadratic_demo(const std::string& method, std::optional<double> eta,
                       std::size_t max_steps, const std::filesystem::path& out_dir,
                       std::ostream& out, std::ostream& err);

/// Monte-Carlo check of the GNB estimator against the exact Gauss-Newton
/// diagonal of a two-class linear softmax model with three parameters.
/// Exits 1 when any coordinate misses by more than 5%.
int cmd_gnb_check(std::size_t draws, std::size_t batch, std::uint64_t seed, std::ostream& out);

/// Applies FEDSOPHIA_LOG (trace, debug, info, warn, error, off) to the logger.
void configure_logging();

}  // namespace fedsophia
