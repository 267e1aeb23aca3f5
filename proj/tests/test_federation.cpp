#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "fedsophia/data.hpp"
#include "fedsophia/errors.hpp"
#include "fedsophia/federation.hpp"
#include "test_util.hpp"

using namespace fedsophia;
using fedsophia::testing::random_params;

namespace {

std::vector<DeviceState> make_devices(const Dataset& ds, const PartitionPlan& plan,
                                      std::size_t param_count, std::uint64_t seed) {
  std::vector<DeviceState> devices;
  auto shards = partition(ds, plan);
  for (std::size_t i = 0; i < shards.size(); ++i) {
    devices.push_back(make_device(i, std::move(shards[i]), param_count, seed));
  }
  return devices;
}

struct SmallTask {
  Mlp model{{{8, 16, 4}}};
  Dataset data = synthetic_blobs(4, 60, 8, 0.1, 5, 3.0);
  PartitionPlan plan{.device_count = 4, .scheme = PartitionScheme::kLabelShard, .seed = 9};

  std::vector<DeviceState> devices(std::uint64_t seed = 1) const {
    return make_devices(data, plan, model.param_count(), seed);
  }
  ParamVector initial() const {
    Rng rng(123);
    return model.initial_params(rng);
  }
};

TrainingConfig small_config(Algorithm algorithm, std::size_t rounds) {
  TrainingConfig cfg;
  cfg.algorithm = algorithm;
  cfg.rounds = rounds;
  cfg.sophia.batch_size = 16;
  cfg.sophia.local_iters = 5;
  return cfg;
}

}  // namespace

TEST_CASE("aggregate is the componentwise mean") {
  const std::vector<ParamVector> two{{1, 2}, {3, 4}};
  CHECK(aggregate(two) == ParamVector{2, 3});
  const std::vector<ParamVector> one{{0.5, -7}};
  CHECK(aggregate(one) == one[0]);
  const std::vector<ParamVector> copies(7, ParamVector{0.25, -1.5, 3.0});
  CHECK(aggregate(copies) == copies[0]);
  CHECK_THROWS_AS(aggregate(std::vector<ParamVector>{}), CapacityError);
  CHECK_THROWS_AS(aggregate(std::vector<ParamVector>{{1, 2}, {1}}), ShapeError);
}

TEST_CASE("aggregate is permutation-invariant and scale-equivariant") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ParamVector> models;
    for (int i = 0; i < 5; ++i) models.push_back(random_params(9, rng));
    const ParamVector mean = aggregate(models);
    std::vector<ParamVector> shuffled = models;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(norm_inf(sub(aggregate(shuffled), mean)) <= 1e-15);
    std::vector<ParamVector> scaled;
    for (const auto& m : models) scaled.push_back(scale(m, 2.5));
    CHECK(norm_inf(sub(aggregate(scaled), scale(mean, 2.5))) <= 1e-14);
  }
}

TEST_CASE("broadcast copies the global model") {
  const SmallTask task;
  auto devices = task.devices();
  const GlobalModel global{task.initial(), 3};
  devices[0].opt.m[0] = 1.0;
  broadcast(global, devices);
  for (const auto& d : devices) CHECK(d.theta == global.theta);
  CHECK(devices[0].opt.m[0] == 1.0);
  broadcast(global, devices);
  for (const auto& d : devices) CHECK(d.theta == global.theta);
  broadcast(global, devices, true);
  CHECK(devices[0].opt.m[0] == 0.0);
  broadcast(global, std::span<DeviceState>{});
}

TEST_CASE("local_round edge cases") {
  const SmallTask task;
  SUBCASE("J = 0 leaves the model alone and charges nothing") {
    auto devices = task.devices();
    TrainingConfig cfg = small_config(Algorithm::kFedSophia, 1);
    cfg.sophia.local_iters = 0;
    broadcast({task.initial(), 0}, devices);
    local_round(task.model, devices[0], cfg);
    CHECK(devices[0].theta == task.initial());
    CHECK(devices[0].ledger.computation_j == 0.0);
  }
  SUBCASE("fedavg at a stationary point stays put") {
    Dataset flat;
    flat.features = DenseMatrix(8, 8);
    flat.class_count = 4;
    for (Label y = 0; y < 8; ++y) flat.labels.push_back(y % 4);
    DeviceState d = make_device(0, {flat, flat}, task.model.param_count(), 1);
    const TrainingConfig cfg = small_config(Algorithm::kFedAvg, 1);
    local_round(task.model, d, cfg);
    CHECK(d.theta == ParamVector(task.model.param_count()));
  }
  SUBCASE("identical devices produce identical models") {
    auto a = task.devices();
    auto b = task.devices();
    const TrainingConfig cfg = small_config(Algorithm::kFedSophia, 1);
    broadcast({task.initial(), 0}, a);
    broadcast({task.initial(), 0}, b);
    local_round(task.model, a[2], cfg);
    local_round(task.model, b[2], cfg);
    CHECK(a[2].theta == b[2].theta);
    CHECK(a[2].opt.h == b[2].opt.h);
  }
  SUBCASE("one computation unit per local iteration") {
    auto devices = task.devices();
    TrainingConfig cfg = small_config(Algorithm::kFedAvg, 1);
    cfg.energy.joules_per_iteration = 0.5;
    broadcast({task.initial(), 0}, devices);
    local_round(task.model, devices[1], cfg);
    CHECK(devices[1].ledger.computation_j == 2.5);
  }
  SUBCASE("DONE is charged at the shard-to-batch ratio") {
    auto devices = task.devices();
    TrainingConfig cfg = small_config(Algorithm::kDone, 1);
    cfg.energy.joules_per_iteration = 0.5;
    cfg.done.richardson_iters = 4;
    cfg.done.alpha = 0.01;
    broadcast({task.initial(), 0}, devices);
    const double before = loss(task.model, devices[0].theta, devices[0].shard.train.as_batch());
    const double after = local_round(task.model, devices[0], cfg);
    const double ratio = static_cast<double>(devices[0].shard.train.size()) / 16.0;
    CHECK(devices[0].ledger.computation_j == doctest::Approx(4 * ratio * 0.5));
    CHECK(after < before);
  }
}

TEST_CASE("evaluate counts correct predictions over the union of test shards") {
  const Mlp linear({{2, 2}});
  // Predicts class 0 when x0 > x1.
  const ParamVector theta{1, 0, 0, 1, 0, 0};
  Dataset a, b;
  a.features = DenseMatrix{{2, 1}, {0, 3}};
  a.labels = {0, 1};
  b.features = DenseMatrix{{5, 4}, {1, 0}, {0, 1}};
  b.labels = {0, 0, 0};
  a.class_count = b.class_count = 2;
  std::vector<DeviceState> devices;
  devices.push_back(make_device(0, {a, a}, 6, 1));
  devices.push_back(make_device(1, {b, b}, 6, 1));
  const Evaluation e = evaluate(linear, theta, devices);
  CHECK(e.accuracy == doctest::Approx(4.0 / 5.0));
  std::swap(devices[0], devices[1]);
  CHECK(evaluate(linear, theta, devices).accuracy == e.accuracy);

  std::vector<DeviceState> perfect;
  perfect.push_back(make_device(0, {a, a}, 6, 1));
  CHECK(evaluate(linear, theta, perfect).accuracy == 1.0);
}

TEST_CASE("an untrained model scores near chance on random labels") {
  const Mlp mlp({{5, 8, 10}});
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<Label> label(0, 9);
    Dataset ds;
    ds.features = DenseMatrix(2000, 5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : ds.features.values()) v = n(gen);
    for (int i = 0; i < 2000; ++i) ds.labels.push_back(label(gen));
    ds.class_count = 10;
    auto devices = make_devices(ds, {.device_count = 4, .scheme = PartitionScheme::kIid,
                                     .seed = seed},
                                mlp.param_count(), seed);
    Rng init(seed);
    mean += evaluate(mlp, mlp.initial_params(init), devices).accuracy / 5.0;
  }
  CHECK(std::abs(mean - 0.1) <= 0.03);
}

TEST_CASE("K = 0 evaluates the initial model once") {
  const SmallTask task;
  auto devices = task.devices();
  const auto records =
      run_experiment(task.model, task.initial(), devices, small_config(Algorithm::kFedAvg, 0));
  REQUIRE(records.size() == 1);
  CHECK(records[0].round == 0);
  CHECK(records[0].totals.total_j() == 0.0);
  CHECK(records[0].device_deltas.size() == 4);
}

TEST_CASE("a round without local steps is a fixed point") {
  const SmallTask task;
  auto devices = task.devices();
  TrainingConfig cfg = small_config(Algorithm::kFedSophia, 2);
  cfg.sophia.local_iters = 0;
  const auto records = run_experiment(task.model, task.initial(), devices, cfg);
  REQUIRE(records.size() == 3);
  CHECK(records[2].accuracy == records[0].accuracy);
  CHECK(records[2].mean_loss == records[0].mean_loss);
  for (const auto& d : devices) CHECK(d.theta == task.initial());
}

TEST_CASE("runs are identical across repetitions and worker counts") {
  const SmallTask task;
  for (Algorithm algorithm : {Algorithm::kFedSophia, Algorithm::kFedAvg, Algorithm::kDone}) {
    TrainingConfig cfg = small_config(algorithm, 3);
    cfg.done.richardson_iters = 5;
    cfg.done.alpha = 0.01;
    auto d1 = task.devices();
    const auto r1 = run_experiment(task.model, task.initial(), d1, cfg);
    cfg.workers = 4;
    auto d2 = task.devices();
    const auto r2 = run_experiment(task.model, task.initial(), d2, cfg);
    REQUIRE(r1.size() == r2.size());
    for (std::size_t k = 0; k < r1.size(); ++k) {
      CHECK(r1[k].accuracy == r2[k].accuracy);
      CHECK(r1[k].mean_loss == r2[k].mean_loss);
      CHECK(r1[k].totals.computation_j == r2[k].totals.computation_j);
      CHECK(r1[k].totals.transmission_j == r2[k].totals.transmission_j);
    }
    for (std::size_t i = 0; i < d1.size(); ++i) CHECK(d1[i].theta == d2[i].theta);
  }
}

TEST_CASE("fed-sophia learns separable blobs") {
  const SmallTask task;
  auto devices = task.devices();
  TrainingConfig cfg = small_config(Algorithm::kFedSophia, 30);
  const auto records = run_experiment(task.model, task.initial(), devices, cfg);
  REQUIRE(records.size() == 31);
  CHECK(records.back().accuracy >= 0.95);
  for (const auto& r : records) {
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
  }
}

TEST_CASE("upload energy depends only on model size and round count") {
  const SmallTask task;
  std::vector<double> e_t;
  for (Algorithm algorithm : {Algorithm::kFedSophia, Algorithm::kFedAvg, Algorithm::kDone}) {
    auto devices = task.devices();
    TrainingConfig cfg = small_config(algorithm, 4);
    cfg.done.richardson_iters = 3;
    cfg.done.alpha = 0.01;
    const auto records = run_experiment(task.model, task.initial(), devices, cfg);
    e_t.push_back(records.back().totals.transmission_j);
    for (std::size_t k = 1; k < records.size(); ++k) {
      for (const auto& delta : records[k].device_deltas) {
        const double bits = 32.0 * static_cast<double>(task.model.param_count());
        CHECK(delta.transmission_j == cfg.channel.tx_power_w * (bits / shannon_rate(cfg.channel)));
        CHECK(delta.uploads == 1);
      }
    }
  }
  CHECK(e_t[0] == e_t[1]);
  CHECK(e_t[1] == e_t[2]);
}

TEST_CASE("device failures propagate") {
  const SmallTask task;
  auto devices = task.devices();
  TrainingConfig cfg = small_config(Algorithm::kDone, 2);
  cfg.done.alpha = 1e6;
  cfg.done.richardson_iters = 50;
  std::size_t seen = 0;
  CHECK_THROWS_AS(run_experiment(task.model, task.initial(), devices, cfg,
                                 [&](const RoundRecord&) { ++seen; }),
                  DivergenceError);
  CHECK(seen == 1);
  CHECK_THROWS_AS(make_device(0, {}, 4, 0), CapacityError);
  auto more = task.devices();
  CHECK_THROWS_AS(run_experiment(task.model, ParamVector(3), more, cfg), ShapeError);
}

TEST_CASE("batch sampler draws without replacement within a pass") {
  BatchSampler sampler(10, Rng(4));
  std::vector<std::size_t> seen;
  for (int i = 0; i < 3; ++i) {
    const auto b = sampler.next(3);
    seen.insert(seen.end(), b.begin(), b.end());
  }
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
  CHECK(sampler.next(3).size() == 3);
  CHECK_THROWS_AS(sampler.next(11), CapacityError);
  CHECK(parse_algorithm("done") == Algorithm::kDone);
  CHECK(algorithm_name(Algorithm::kFedAvg) == "fedavg");
  CHECK_THROWS_AS(parse_algorithm("fedprox"), ConfigError);
}
