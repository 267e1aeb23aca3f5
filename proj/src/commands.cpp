#include "fedsophia/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "fedsophia/errors.hpp"
#include "fedsophia/optimizers.hpp"
#include "fedsophia/quadratic.hpp"

namespace fedsophia {

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void apply_overrides(ConfigEntries& entries, const RunOptions& opts) {
  if (opts.seed) entries["seed"] = {std::to_string(*opts.seed), 0};
  if (opts.workers) entries["workers"] = {std::to_string(*opts.workers), 0};
  if (opts.out) entries["out"] = {"\"" + opts.out->string() + "\"", 0};
}

int report_config_error(const std::filesystem::path& path, const std::exception& e,
                        std::ostream& err) {
  err << path.string() << ": " << e.what() << '\n';
  return kExitUsage;
}

nlohmann::ordered_json ledger_json(const EnergyLedger& l, double carbon_factor) {
  return {{"e_comp_j", l.computation_j},
          {"e_tx_j", l.transmission_j},
          {"e_total_j", l.total_j()},
          {"bits", l.bits_sent},
          {"uploads", l.uploads},
          {"airtime_s", l.airtime_s},
          {"carbon_kg", carbon(l, carbon_factor)}};
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = item.find_last_not_of(" \t");
    out.push_back(item.substr(first, last - first + 1));
  }
  return out;
}

}  // namespace

void configure_logging() {
  const char* env = std::getenv("FEDSOPHIA_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  const DataSource& src = cfg.data;
  if (src.kind == DataSource::Kind::kSynthetic) {
    return synthetic_blobs(src.classes, src.per_class, src.dim, src.spread,
                           derive_seed(cfg.training.seed, 0, StreamPurpose::kData), src.separation);
  }
  Dataset ds = load_idx(src.images, src.labels);
  if (src.limit > 0 && src.limit < ds.size()) {
    std::vector<std::size_t> keep(src.limit);
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
    const std::size_t classes = ds.class_count;
    ds = ds.subset(keep);
    ds.class_count = classes;
  }
  return ds;
}

ExperimentRun run_configured(const ExperimentConfig& cfg, const RoundCallback& on_round) {
  const std::uint64_t seed = cfg.training.seed;
  const Dataset ds = load_dataset(cfg);
  const Mlp model(cfg.model);
  if (ds.class_count > model.class_count()) {
    throw ShapeError("dataset has " + std::to_string(ds.class_count) +
                     " classes but the model outputs " + std::to_string(model.class_count()));
  }
  PartitionPlan plan = cfg.partition;
  plan.seed = derive_seed(seed, 0, StreamPurpose::kPartition);
  std::vector<DeviceShard> shards = partition(ds, plan);

  std::vector<DeviceState> devices;
  devices.reserve(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    devices.push_back(make_device(i, std::move(shards[i]), model.param_count(), seed));
  }
  Rng init = make_stream(seed, 0, StreamPurpose::kInit);
  ParamVector theta0 = model.initial_params(init);

  ExperimentRun run;
  run.records = run_experiment(model, theta0, devices, cfg.training, on_round);
  for (const DeviceState& d : devices) run.device_ledgers.push_back(d.ledger);
  if (cfg.training.rounds == 0) {
    run.final_model = std::move(theta0);
  } else {
    std::vector<ParamVector> thetas;
    for (const DeviceState& d : devices) thetas.push_back(d.theta);
    run.final_model = aggregate(thetas);
  }
  return run;
}

std::string metrics_row(const RoundRecord& rec) {
  return std::to_string(rec.round) + "," + format_number(rec.accuracy) + "," +
         format_number(rec.mean_loss) + "," + format_number(rec.totals.computation_j) + "," +
         format_number(rec.totals.transmission_j) + "," + std::to_string(rec.totals.bits_sent) +
         "," + format_number(rec.totals.airtime_s);
}

ConfigEntries load_config_entries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_entries(buf.str());
}

int cmd_run(const RunOptions& opts, std::ostream& err) {
  configure_logging();
  ExperimentConfig cfg;
  try {
    ConfigEntries entries = load_config_entries(opts.config);
    apply_overrides(entries, opts);
    cfg = build_config(entries);
  } catch (const ConfigError& e) {
    return report_config_error(opts.config, e, err);
  }

  try {
    std::filesystem::create_directories(cfg.out_dir);
    write_json(cfg.out_dir / "resolved-config.json", to_json(cfg));

    std::ofstream metrics(cfg.out_dir / "metrics.csv");
    if (!metrics) throw Error("cannot write " + (cfg.out_dir / "metrics.csv").string());
    metrics << kMetricsHeader << '\n' << std::flush;

    spdlog::info("{}: {} rounds, {} devices, model {} parameters",
                 algorithm_name(cfg.training.algorithm), cfg.training.rounds,
                 cfg.partition.device_count, cfg.model.param_count());
    const auto start = std::chrono::steady_clock::now();
    const ExperimentRun run = run_configured(cfg, [&](const RoundRecord& rec) {
      metrics << metrics_row(rec) << '\n' << std::flush;
      spdlog::info("round {:>4}  accuracy {:.4f}  train loss {:.4f}  ({:.2f} s)", rec.round,
                   rec.accuracy, rec.mean_loss, rec.wall_time.count());
    });
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;

    const double factor = cfg.training.energy.carbon_kg_per_mj;
    nlohmann::ordered_json summary;
    summary["algorithm"] = std::string(algorithm_name(cfg.training.algorithm));
    summary["rounds"] = cfg.training.rounds;
    summary["final_accuracy"] = run.records.back().accuracy;
    summary["final_train_loss"] = run.records.back().mean_loss;
    summary["final_test_loss"] = run.records.back().test_loss;
    summary["totals"] = ledger_json(run.records.back().totals, factor);
    summary["devices"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < run.device_ledgers.size(); ++i) {
      nlohmann::ordered_json d = ledger_json(run.device_ledgers[i], factor);
      d["id"] = i;
      summary["devices"].push_back(std::move(d));
    }
    summary["carbon_kg_per_mj"] = factor;
    summary["wall_seconds"] = wall.count();
    write_json(cfg.out_dir / "summary.json", summary);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

std::vector<std::string> table_preset_grid() {
  return {"eta=0.01,0.003,0.0005;J=10", "eta=0.001;J=1,5,10"};
}

std::vector<SweepCell> expand_grid(const std::vector<std::string>& grid_blocks) {
  std::vector<SweepCell> cells;
  for (const std::string& block : grid_blocks) {
    std::vector<std::pair<std::string, std::vector<std::string>>> axes;
    for (const std::string& axis : split(block, ';')) {
      const auto eq = axis.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("grid axis '" + axis + "' is not of the form key=v1,v2");
      }
      const std::vector<std::string> name = split(axis.substr(0, eq), ' ');
      const std::string key = canonical_key(name.size() == 1 ? name.front() : axis.substr(0, eq));
      if (!is_known_key(key)) throw ConfigError("grid: unknown key '" + key + "'");
      std::vector<std::string> values = split(axis.substr(eq + 1), ',');
      if (values.empty()) throw ConfigError("grid: no values for '" + key + "'");
      axes.emplace_back(key, std::move(values));
    }
    if (axes.empty()) continue;
    std::vector<SweepCell> block_cells{SweepCell{}};
    for (const auto& [key, values] : axes) {
      std::vector<SweepCell> next;
      for (const SweepCell& cell : block_cells) {
        for (const std::string& v : values) {
          SweepCell c = cell;
          c.assignments.emplace_back(key, v);
          next.push_back(std::move(c));
        }
      }
      block_cells = std::move(next);
    }
    cells.insert(cells.end(), block_cells.begin(), block_cells.end());
  }
  if (cells.empty()) throw ConfigError("empty sweep grid");
  return cells;
}

int cmd_sweep(const RunOptions& opts, const std::vector<std::string>& grid_blocks,
              std::ostream& err) {
  configure_logging();
  std::vector<SweepCell> cells;
  ConfigEntries entries;
  ExperimentConfig base;
  try {
    cells = expand_grid(grid_blocks);
  } catch (const ConfigError& e) {
    err << "sweep: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    entries = load_config_entries(opts.config);
    apply_overrides(entries, opts);
    base = build_config(entries);
  } catch (const ConfigError& e) {
    return report_config_error(opts.config, e, err);
  }

  std::vector<std::string> keys;
  for (const SweepCell& c : cells) {
    for (const auto& [k, v] : c.assignments) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
  }

  try {
    std::filesystem::create_directories(base.out_dir);
    write_json(base.out_dir / "resolved-config.json", to_json(base));
    std::ofstream csv(base.out_dir / "sweep.csv");
    if (!csv) throw Error("cannot write " + (base.out_dir / "sweep.csv").string());
    csv << "cell";
    for (const std::string& k : keys) csv << ',' << k;
    csv << ",final_accuracy,status\n" << std::flush;

    bool all_ok = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      ConfigEntries cell_entries = entries;
      std::vector<std::string> shown(keys.size());
      for (const auto& [k, v] : cells[i].assignments) {
        cell_entries[k] = {v, 0};
        shown[static_cast<std::size_t>(std::find(keys.begin(), keys.end(), k) - keys.begin())] = v;
      }
      std::string accuracy;
      std::string status = "ok";
      try {
        const ExperimentRun run = run_configured(build_config(cell_entries));
        accuracy = format_number(run.records.back().accuracy);
        spdlog::info("sweep cell {}/{}: accuracy {}", i + 1, cells.size(), accuracy);
      } catch (const std::exception& e) {
        all_ok = false;
        status = std::string("error: ") + e.what();
        spdlog::error("sweep cell {}/{} failed: {}", i + 1, cells.size(), e.what());
      }
      csv << i;
      for (const std::string& v : shown) csv << ',' << csv_escape(v);
      csv << ',' << accuracy << ',' << csv_escape(status) << '\n' << std::flush;
    }
    return all_ok ? kExitOk : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_quadratic_demo(const std::string& method, std::optional<double> eta,
                       std::size_t max_steps, const std::filesystem::path& out_dir,
                       std::ostream& out, std::ostream& err) {
  QuadraticMethod m{};
  try {
    m = parse_quadratic_method(method);
  } catch (const ConfigError& e) {
    err << "quadratic-demo: " << e.what() << '\n';
    return kExitUsage;
  }
  const double step = eta.value_or(m == QuadraticMethod::kGradient ? 0.1 : 1.0);
  if (!(step > 0.0)) {
    err << "quadratic-demo: --eta must be > 0\n";
    return kExitUsage;
  }
  const auto trajectory = quadratic_demo({1.0, 1.0}, m, step, max_steps);

  try {
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir / "trajectory.csv");
    if (!csv) throw Error("cannot write " + (out_dir / "trajectory.csv").string());
    csv << "step,theta1,theta2,f\n";
    out << std::setw(6) << "step" << std::setw(16) << "theta1" << std::setw(16) << "theta2"
        << std::setw(16) << "f" << '\n';
    for (const auto& it : trajectory) {
      csv << it.step << ',' << format_number(it.theta[0]) << ',' << format_number(it.theta[1])
          << ',' << format_number(it.value) << '\n';
      out << std::setw(6) << it.step << std::setw(16) << format_number(it.theta[0])
          << std::setw(16) << format_number(it.theta[1]) << std::setw(16)
          << format_number(it.value) << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_gnb_check(std::size_t draws, std::size_t batch, std::uint64_t seed, std::ostream& out) {
  const BinaryLogitModel model(2);
  const ParamVector theta{0.8, -0.5, 0.2};
  Rng data_rng = make_stream(seed, 0, StreamPurpose::kData);
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix features(batch, 2);
  for (double& v : features.values()) v = normal(data_rng);

  const ParamVector exact = gauss_newton_diagonal(model, theta, features);
  ParamVector mean(model.param_count());
  Rng rng = make_stream(seed, 0, StreamPurpose::kGnb);
  for (std::size_t k = 0; k < draws; ++k) axpy(1.0, gnb_estimate(model, theta, features, rng), mean);
  for (double& v : mean) v /= static_cast<double>(draws);

  out << "coord  exact_gn_diag     gnb_mean          rel_error\n";
  bool ok = true;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    const double rel = std::abs(mean[i] - exact[i]) / std::abs(exact[i]);
    ok = ok && rel <= 0.05;
    out << std::setw(5) << i << "  " << std::setw(16) << format_number(exact[i]) << "  "
        << std::setw(16) << format_number(mean[i]) << "  " << format_number(rel) << '\n';
  }
  out << (ok ? "PASS" : "FAIL") << ": " << draws << " draws, batch " << batch
      << ", tolerance 5% per coordinate\n";
  return ok ? kExitOk : kExitFailure;
}

}  // namespace fedsophia
