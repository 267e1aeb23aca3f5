#include "fedsophia/federation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <numeric>
#include <string>
#include <thread>
#include <utility>

#include "fedsophia/errors.hpp"

namespace fedsophia {

namespace {

// Sum in list order, then divide: the result depends only on the order of
// the models, never on which worker produced them.
template <typename Get>
ParamVector mean_of(std::size_t count, Get get) {
  if (count == 0) throw CapacityError("aggregate: no models");
  ParamVector sum = get(0);
  for (std::size_t i = 1; i < count; ++i) {
    const ParamVector& v = get(i);
    if (v.size() != sum.size()) throw ShapeError("aggregate: models differ in length");
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += v[k];
  }
  const double n = static_cast<double>(count);
  for (double& v : sum) v /= n;
  return sum;
}

std::size_t effective_batch(const DeviceState& device, const TrainingConfig& cfg) {
  return std::min(cfg.sophia.batch_size, device.shard.train.size());
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  std::vector<std::exception_ptr> errors(count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  // Report the failure of the lowest-numbered device so errors are as
  // deterministic as results.
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Algorithm parse_algorithm(std::string_view name) {
  if (name == "fed-sophia") return Algorithm::kFedSophia;
  if (name == "fedavg") return Algorithm::kFedAvg;
  if (name == "done") return Algorithm::kDone;
  throw ConfigError("unknown algorithm '" + std::string(name) +
                    "' (expected fed-sophia, fedavg or done)");
}

std::string_view algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kFedSophia:
      return "fed-sophia";
    case Algorithm::kFedAvg:
      return "fedavg";
    case Algorithm::kDone:
      return "done";
  }
  return "unknown";
}

void DoneConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("done: alpha must be > 0");
  if (richardson_iters < 1) throw ConfigError("done: richardson_iters must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("done: step_size must be > 0");
}

void EnergyConfig::validate() const {
  if (!(joules_per_flop >= 0.0)) throw ConfigError("energy: joules_per_flop must be >= 0");
  if (joules_per_iteration && !(*joules_per_iteration >= 0.0)) {
    throw ConfigError("energy: joules_per_iteration must be >= 0");
  }
  if (!(carbon_kg_per_mj >= 0.0)) throw ConfigError("energy: carbon factor must be >= 0");
}

void TrainingConfig::validate() const {
  sophia.validate();
  done.validate();
  channel.validate();
  energy.validate();
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

BatchSampler::BatchSampler(std::size_t population, Rng rng)
    : order_(population), cursor_(population), rng_(std::move(rng)) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch_size) {
  if (batch_size == 0 || batch_size > order_.size()) {
    throw CapacityError("batch of " + std::to_string(batch_size) + " from " +
                        std::to_string(order_.size()) + " samples");
  }
  if (cursor_ + batch_size > order_.size()) reshuffle();
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size));
  cursor_ += batch_size;
  return out;
}

DeviceState make_device(std::size_t id, DeviceShard shard, std::size_t param_count,
                        std::uint64_t seed) {
  if (shard.train.size() == 0) {
    throw CapacityError("device " + std::to_string(id) + " has an empty training shard");
  }
  const std::size_t n = shard.train.size();
  return DeviceState{
      .id = id,
      .shard = std::move(shard),
      .theta = ParamVector(param_count),
      .opt = OptimizerState::zeros(param_count),
      .ledger = {},
      .sampler = BatchSampler(n, make_stream(seed, id, StreamPurpose::kBatch)),
      .gnb_rng = make_stream(seed, id, StreamPurpose::kGnb),
  };
}

void broadcast(const GlobalModel& global, std::span<DeviceState> devices, bool reset_optimizer) {
  for (DeviceState& d : devices) {
    d.theta = global.theta;
    if (reset_optimizer) d.opt = OptimizerState::zeros(global.theta.size());
  }
}

double iteration_joules(const Classifier& model, const DeviceState& device,
                        const TrainingConfig& cfg) {
  if (cfg.energy.joules_per_iteration) return *cfg.energy.joules_per_iteration;
  return iteration_energy(model.flops_per_sample(), effective_batch(device, cfg),
                          cfg.energy.joules_per_flop);
}

double local_round(const Classifier& model, DeviceState& device, const TrainingConfig& cfg) {
  const Dataset& train = device.shard.train;
  const std::size_t batch_size = effective_batch(device, cfg);
  const double per_iter = iteration_joules(model, device, cfg);

  if (cfg.algorithm == Algorithm::kDone) {
    // Every Richardson iteration touches the whole shard.
    const Batch full = train.as_batch();
    const ParamVector g = gradient(model, device.theta, full);
    const ParamVector dir = done_local_direction(model, device.theta, g, full, cfg.done.alpha,
                                                 cfg.done.richardson_iters);
    axpy(-cfg.done.step_size, dir, device.theta);
    const double ratio = static_cast<double>(train.size()) / static_cast<double>(batch_size);
    charge_computation(device.ledger, static_cast<double>(cfg.done.richardson_iters) * ratio,
                       per_iter);
    return loss(model, device.theta, full);
  }

  double loss_sum = 0.0;
  for (std::size_t j = 0; j < cfg.sophia.local_iters; ++j) {
    const std::vector<std::size_t> idx = device.sampler.next(batch_size);
    const Batch batch{train.features.gather_rows(idx), [&] {
                        std::vector<Label> y;
                        y.reserve(idx.size());
                        for (std::size_t i : idx) y.push_back(train.labels[i]);
                        return y;
                      }()};
    if (cfg.algorithm == Algorithm::kFedSophia) {
      loss_sum += sophia_local_step(model, device.theta, device.opt, cfg.sophia, batch,
                                    device.gnb_rng)
                      .loss;
    } else {
      loss_sum += loss(model, device.theta, batch);
      device.theta = fedavg_local_step(model, device.theta, cfg.sophia.learning_rate, batch);
    }
  }
  charge_computation(device.ledger, static_cast<double>(cfg.sophia.local_iters), per_iter);
  return cfg.sophia.local_iters == 0 ? 0.0
                                     : loss_sum / static_cast<double>(cfg.sophia.local_iters);
}

ParamVector aggregate(std::span<const ParamVector> models) {
  return mean_of(models.size(), [&](std::size_t i) -> const ParamVector& { return models[i]; });
}

Evaluation evaluate(const Classifier& model, const ParamVector& theta,
                    std::span<const DeviceState> devices, bool use_train) {
  std::size_t correct = 0;
  std::size_t total = 0;
  double loss_sum = 0.0;
  for (const DeviceState& d : devices) {
    const Dataset& ds = use_train ? d.shard.train : d.shard.test;
    if (ds.size() == 0) continue;
    const DenseMatrix z = forward_logits(model, theta, ds.features);
    const std::vector<Label> pred = argmax_rows(z);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == ds.labels[i] ? 1 : 0;
    loss_sum += cross_entropy(z, ds.labels) * static_cast<double>(ds.size());
    total += ds.size();
  }
  if (total == 0) return {};
  return {static_cast<double>(correct) / static_cast<double>(total),
          loss_sum / static_cast<double>(total)};
}

std::vector<RoundRecord> run_experiment(const Classifier& model, ParamVector initial,
                                        std::vector<DeviceState>& devices,
                                        const TrainingConfig& cfg,
                                        const RoundCallback& on_round) {
  cfg.validate();
  if (initial.size() != model.param_count()) {
    throw ShapeError("initial model length does not match the classifier");
  }
  GlobalModel global{std::move(initial), 0};
  std::vector<RoundRecord> records;
  EnergyLedger totals;

  auto finish = [&](RoundRecord rec, std::chrono::steady_clock::time_point start) {
    const Evaluation test = evaluate(model, global.theta, devices);
    rec.accuracy = test.accuracy;
    rec.test_loss = test.mean_loss;
    rec.mean_loss = evaluate(model, global.theta, devices, true).mean_loss;
    rec.totals = totals;
    rec.wall_time = std::chrono::steady_clock::now() - start;
    records.push_back(std::move(rec));
    if (on_round) on_round(records.back());
  };

  RoundRecord initial_record;
  initial_record.device_deltas.resize(devices.size());
  finish(std::move(initial_record), std::chrono::steady_clock::now());

  for (std::size_t k = 1; k <= cfg.rounds; ++k) {
    const auto start = std::chrono::steady_clock::now();
    broadcast(global, devices, cfg.sophia.reset_state_each_round);
    std::vector<EnergyLedger> deltas(devices.size());
    parallel_for(devices.size(), cfg.workers, [&](std::size_t i) {
      // Charge the round into a fresh ledger so the reported delta is exact.
      DeviceState& d = devices[i];
      const EnergyLedger before = std::exchange(d.ledger, EnergyLedger{});
      local_round(model, d, cfg);
      charge_transmission(d.ledger, d.theta.size(), cfg.channel);
      deltas[i] = std::exchange(d.ledger, before);
      d.ledger += deltas[i];
    });
    for (const EnergyLedger& delta : deltas) totals += delta;
    global.theta = mean_of(devices.size(),
                           [&](std::size_t i) -> const ParamVector& { return devices[i].theta; });
    global.round = k;
    RoundRecord rec;
    rec.round = k;
    rec.device_deltas = std::move(deltas);
    finish(std::move(rec), start);
  }
  return records;
}

}  // namespace fedsophia
