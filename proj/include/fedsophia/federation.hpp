#pragma once

// Round-based federated training simulation.
//
// Each round the server broadcasts the global model, every device runs its
// local procedure on its own training shard, uploads its model (charged to
// its energy ledger) and the server replaces the global model with the
// plain average of the uploads. Devices only touch their own state during a
// round, so they may run on any number of worker threads without changing
// the result.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedsophia/data.hpp"
#include "fedsophia/linalg.hpp"
#include "fedsophia/models.hpp"
#include "fedsophia/optimizers.hpp"
#include "fedsophia/rng.hpp"
#include "fedsophia/telemetry.hpp"

namespace fedsophia {

enum class Algorithm { kFedSophia, kFedAvg, kDone };

/// Accepts fed-sophia, fedavg, done. Throws ConfigError otherwise.
Algorithm parse_algorithm(std::string_view name);
std::string_view algorithm_name(Algorithm algorithm);

struct DoneConfig {
  double alpha = 0.05;
  std::size_t richardson_iters = 50;
  /// The device model moves by -step_size * direction once per round.
  double step_size = 1.0;

  void validate() const;
};

struct EnergyConfig {
  double joules_per_flop = 1e-11;
  /// Overrides the FLOP model when set.
  std::optional<double> joules_per_iteration;
  double carbon_kg_per_mj = 0.07;

  void validate() const;
};

struct TrainingConfig {
  Algorithm algorithm = Algorithm::kFedSophia;
  /// learning_rate, local_iters and batch_size are shared with FedAvg.
  SophiaConfig sophia;
  DoneConfig done;
  ChannelConfig channel;
  EnergyConfig energy;
  std::size_t rounds = 40;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const;
};

/// Draws mini-batch indices without replacement; a fresh permutation is
/// drawn whenever the current one cannot supply a full batch.
class BatchSampler {
 public:
  BatchSampler(std::size_t population, Rng rng);

  std::vector<std::size_t> next(std::size_t batch_size);

 private:
  void reshuffle();

  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct DeviceState {
  std::size_t id = 0;
  DeviceShard shard;
  ParamVector theta;
  OptimizerState opt;
  EnergyLedger ledger;
  BatchSampler sampler;
  Rng gnb_rng;
};

/// Device with zeroed model and optimizer state; RNG streams derive from
/// (seed, id).
DeviceState make_device(std::size_t id, DeviceShard shard, std::size_t param_count,
                        std::uint64_t seed);

struct GlobalModel {
  ParamVector theta;
  std::size_t round = 0;
};

/// Copies the global parameters into every device. Optimizer state is kept
/// unless reset_optimizer is set.
void broadcast(const GlobalModel& global, std::span<DeviceState> devices,
               bool reset_optimizer = false);

/// Energy charged for one local iteration of a device.
double iteration_joules(const Classifier& model, const DeviceState& device,
                        const TrainingConfig& cfg);

/// Runs the device's local procedure and charges its computation energy.
/// Returns the mean mini-batch loss seen during the round (0 when no step ran).
double local_round(const Classifier& model, DeviceState& device, const TrainingConfig& cfg);

/// Componentwise mean. Throws CapacityError on an empty list, ShapeError on
/// unequal lengths.
ParamVector aggregate(std::span<const ParamVector> models);

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

/// Accuracy and mean cross-entropy of theta over the union of all device
/// test shards (or train shards when use_train is set).
Evaluation evaluate(const Classifier& model, const ParamVector& theta,
                    std::span<const DeviceState> devices, bool use_train = false);

struct RoundRecord {
  std::size_t round = 0;
  double accuracy = 0.0;
  /// Mean cross-entropy of the global model over the union of train shards.
  double mean_loss = 0.0;
  double test_loss = 0.0;
  /// Energy charged to each device during this round.
  std::vector<EnergyLedger> device_deltas;
  /// Cumulative totals over all devices.
  EnergyLedger totals;
  std::chrono::duration<double> wall_time{};
};

using RoundCallback = std::function<void(const RoundRecord&)>;

/// Round 0 evaluates the initial model; rounds 1..K each train, aggregate
/// and evaluate. on_round sees every record as soon as it exists, so a
/// caller can persist partial results if a later round throws.
std::vector<RoundRecord> run_experiment(const Classifier& model, ParamVector initial,
                                        std::vector<DeviceState>& devices,
                                        const TrainingConfig& cfg,
                                        const RoundCallback& on_round = {});

}  // namespace fedsophia
