// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers as arguments to
// run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fedsophia/commands.hpp"
#include "fedsophia/config.hpp"
#include "fedsophia/federation.hpp"
#include "fedsophia/models.hpp"
#include "fedsophia/optimizers.hpp"
#include "fedsophia/quadratic.hpp"
#include "fedsophia/telemetry.hpp"
#include "test_util.hpp"

using namespace fedsophia;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fedsophia_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig desk_config() { return load_config(FEDSOPHIA_DESK_CONFIG); }

// 1. Backprop against central differences on a 4-5-3 MLP.
Outcome gradient_correctness() {
  const Mlp mlp({{4, 5, 3}});
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    const ParamVector theta = testing::random_params(mlp.param_count(), rng);
    const Batch batch = testing::random_batch(8, 4, 3, rng);
    const ParamVector g = gradient(mlp, theta, batch);
    const ParamVector fd = testing::central_difference_gradient(
        [&](const ParamVector& t) { return loss(mlp, t, batch); }, theta, 1e-5);
    worst = std::max(worst, norm_inf(sub(g, fd)) / norm_inf(fd));
  }
  return {worst <= 1e-5, fmt("max relative error %.3g over 20 draws (limit 1e-5)", worst)};
}

// 2. Mean of GNB draws against the analytic Gauss-Newton diagonal.
Outcome gnb_oracle() {
  const BinaryLogitModel model(2);
  const ParamVector theta{0.8, -0.5, 0.2};
  std::mt19937_64 gen(7);
  const DenseMatrix x = testing::random_batch(8, 2, 2, gen).features;
  ParamVector exact(3);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double p = 1.0 / (1.0 + std::exp(-(theta[0] * x(r, 0) + theta[1] * x(r, 1) + theta[2])));
    const double s = p * (1.0 - p) / static_cast<double>(x.rows());
    exact[0] += s * x(r, 0) * x(r, 0);
    exact[1] += s * x(r, 1) * x(r, 1);
    exact[2] += s;
  }
  Rng rng(11);
  ParamVector mean(3);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) mean = add(mean, gnb_estimate(model, theta, x, rng));
  double worst = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    worst = std::max(worst, std::abs(mean[k] / draws - exact[k]) / exact[k]);
  }
  return {worst <= 0.05, fmt("worst per-coordinate relative error %.4f over %d draws (limit 0.05)",
                             worst, draws)};
}

// 3. Full Newton in one step; gradient descent slow on the same quadratic.
Outcome quadratic_demo_check() {
  auto inf = [](const Point2& t) { return std::max(std::abs(t[0]), std::abs(t[1])); };
  const auto newton = quadratic_demo({1, 1}, QuadraticMethod::kFullNewton, 1.0, 100);
  const bool newton_ok = newton.size() == 2 && inf(newton[1].theta) <= 1e-9;
  const auto gd = quadratic_demo({1, 1}, QuadraticMethod::kGradient, 0.1, 10000);
  std::size_t steps = gd.size();
  for (const auto& it : gd) {
    if (inf(it.theta) <= 1e-3) {
      steps = it.step;
      break;
    }
  }
  return {newton_ok && steps > 10 && steps < gd.size(),
          fmt("full-newton |theta|_inf %.1e after %zu step(s); gradient descent needs %zu steps to 1e-3",
              inf(newton.back().theta), newton.size() - 1, steps)};
}

// 4. Clipped displacement never exceeds eta * rho.
Outcome clipping_bound() {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Mlp mlp({{6, 8, 4}});
  int violations = 0;
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    SophiaConfig cfg;
    cfg.learning_rate = std::pow(10.0, -4.0 + 3.0 * unit(gen));
    cfg.clip_radius = std::pow(10.0, -2.0 + 3.0 * unit(gen));
    cfg.hessian_interval = 1 + trial % 5;
    OptimizerState state{testing::random_params(mlp.param_count(), gen, 2.0),
                         ParamVector(mlp.param_count()), static_cast<std::uint64_t>(trial)};
    for (double& v : state.h) v = unit(gen) < 0.3 ? 0.0 : 1e-3 * unit(gen);
    ParamVector theta = testing::random_params(mlp.param_count(), gen, 2.0);
    const Batch batch = testing::random_batch(6, 6, 4, gen);
    Rng rng(static_cast<std::uint64_t>(trial));
    const SophiaStepInfo info = sophia_local_step(mlp, theta, state, cfg, batch, rng);
    const double bound = cfg.learning_rate * cfg.clip_radius;
    if (norm_inf(info.update) > bound) ++violations;
    worst_ratio = std::max(worst_ratio, norm_inf(info.update) / bound);
  }
  return {violations == 0,
          fmt("%d violations in 1000 steps; largest |step|_inf / (eta rho) = %.17g", violations,
              worst_ratio)};
}

// 5. Richardson iteration against a direct solve.
Outcome richardson_oracle() {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> eig(0.5, 10.0);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> eigs(10);
    for (double& e : eigs) e = eig(gen);
    const double lambda_max = *std::max_element(eigs.begin(), eigs.end());
    const auto h = testing::random_spd(eigs, gen);
    std::vector<double> b(10);
    for (double& v : b) v = n(gen);
    const ParamVector direct(testing::solve_dense(h, b));
    const GradientFn grad = [&](const ParamVector& t) {
      ParamVector g(10);
      for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j) g[i] += h[i][j] * t[j];
      return g;
    };
    const ParamVector d = done_local_direction(grad, ParamVector(10), ParamVector(b),
                                               1.0 / lambda_max, 500);
    worst = std::max(worst, norm2(sub(d, direct)) / norm2(direct));
  }
  return {worst <= 1e-3, fmt("worst relative error %.3g over 20 SPD systems (limit 1e-3)", worst)};
}

struct Curve {
  std::vector<double> accuracy;
  double final() const { return accuracy.back(); }
  // First round whose accuracy reaches 90% of the final accuracy.
  std::size_t rounds_to_90() const {
    for (std::size_t k = 0; k < accuracy.size(); ++k) {
      if (accuracy[k] >= 0.9 * final()) return k;
    }
    return accuracy.size();
  }
};

Curve desk_curve(Algorithm algorithm, double eta, std::uint64_t seed) {
  ExperimentConfig cfg = desk_config();
  cfg.training.algorithm = algorithm;
  cfg.training.sophia.learning_rate = eta;
  cfg.training.seed = seed;
  Curve c;
  for (const RoundRecord& r : run_configured(cfg).records) c.accuracy.push_back(r.accuracy);
  return c;
}

// 6. Fed-Sophia needs fewer rounds than FedAvg on the desk task.
Outcome desk_comparison() {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = desk_config().training.seed;
  struct Tuned {
    double eta = 0.0;
    Curve curve;
  };
  auto tune = [&](Algorithm algorithm) {
    Tuned best;
    for (double eta : {0.01, 0.003, 0.0005}) {
      Curve c = desk_curve(algorithm, eta, seed);
      std::cout << "  " << algorithm_name(algorithm) << " eta=" << eta << ": final accuracy "
                << c.final() << ", 90% of final at round " << c.rounds_to_90() << '\n';
      const bool better = best.curve.accuracy.empty() || c.final() > best.curve.final() ||
                          (c.final() == best.curve.final() &&
                           c.rounds_to_90() < best.curve.rounds_to_90());
      if (better) best = {eta, std::move(c)};
    }
    return best;
  };
  const Tuned sophia = tune(Algorithm::kFedSophia);
  const Tuned fedavg = tune(Algorithm::kFedAvg);

  std::size_t r_sophia = sophia.curve.rounds_to_90();
  std::size_t r_fedavg = fedavg.curve.rounds_to_90();
  std::string basis = "seed " + std::to_string(seed);
  if (r_sophia >= r_fedavg) {
    std::vector<std::size_t> rs{r_sophia}, rf{r_fedavg};
    for (std::uint64_t s = seed + 1; s < seed + 5; ++s) {
      rs.push_back(desk_curve(Algorithm::kFedSophia, sophia.eta, s).rounds_to_90());
      rf.push_back(desk_curve(Algorithm::kFedAvg, fedavg.eta, s).rounds_to_90());
    }
    std::nth_element(rs.begin(), rs.begin() + 2, rs.end());
    std::nth_element(rf.begin(), rf.begin() + 2, rf.end());
    r_sophia = rs[2];
    r_fedavg = rf[2];
    basis = "median of 5 seeds";
  }
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  const bool pass = r_sophia < r_fedavg && sophia.curve.final() > 0.85 &&
                    fedavg.curve.final() > 0.85 && minutes < 10.0;
  return {pass, fmt("rounds to 90%% of final (%s): fed-sophia %zu (eta %g, final %.3f) vs "
                    "fedavg %zu (eta %g, final %.3f); %.1f min",
                    basis.c_str(), r_sophia, sophia.eta, sophia.curve.final(), r_fedavg,
                    fedavg.eta, fedavg.curve.final(), minutes)};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

// 7. Learning-rate / local-iteration table on the desk task.
Outcome sweep_shape() {
  const fs::path out = scratch("sweep");
  std::ostringstream err;
  const int code = cmd_sweep({.config = FEDSOPHIA_DESK_CONFIG, .out = out}, table_preset_grid(), err);
  const auto rows = read_csv(out / "sweep.csv");
  if (code != kExitOk || rows.size() != 7) {
    return {false, fmt("sweep exit %d with %zu data rows: %s", code,
                       rows.empty() ? 0 : rows.size() - 1, err.str().c_str())};
  }
  // Columns: cell, learning rate, local iterations, final accuracy, status.
  for (const auto& r : rows) std::cout << "  " << r[0] << ' ' << r[1] << ' ' << r[2] << ' ' << r[3] << '\n';
  double best_acc = -1.0;
  std::size_t best_row = 0;
  for (std::size_t i = 1; i <= 3; ++i) {
    const double acc = std::stod(rows[i][3]);
    if (acc > best_acc) {
      best_acc = acc;
      best_row = i;
    }
  }
  const double acc_j1 = std::stod(rows[4][3]);
  const double acc_j10 = std::stod(rows[6][3]);
  const bool interior = best_row == 2;
  return {acc_j10 > acc_j1,
          fmt("6 cells; accuracy J=10 %.3f vs J=1 %.3f; best eta %s (%s)", acc_j10, acc_j1,
              rows[best_row][1].c_str(),
              interior ? "interior" : "boundary of the grid, documented")};
}

// 8. Channel rate, per-upload energy and algorithm-independent upload energy.
Outcome telemetry_check() {
  const ChannelConfig ch;
  const double rate = shannon_rate(ch);
  const bool rate_ok = std::abs(rate - 2.0e6) <= 2.0e6 * 1e-12;

  bool per_round_ok = true;
  std::vector<std::vector<double>> e_t;
  for (Algorithm algorithm : {Algorithm::kFedSophia, Algorithm::kFedAvg}) {
    ExperimentConfig cfg = desk_config();
    cfg.training.algorithm = algorithm;
    cfg.training.rounds = 3;
    const double d = static_cast<double>(cfg.model.param_count());
    const double expected = ch.tx_power_w * (32.0 * d / rate);
    std::vector<double> series;
    for (const RoundRecord& rec : run_configured(cfg).records) {
      series.push_back(rec.totals.transmission_j);
      if (rec.round == 0) continue;
      for (const EnergyLedger& delta : rec.device_deltas) {
        per_round_ok = per_round_ok && delta.transmission_j == expected;
      }
    }
    e_t.push_back(std::move(series));
  }
  const bool equal_ok = e_t[0] == e_t[1];
  return {rate_ok && per_round_ok && equal_ok,
          fmt("rate %.15g bit/s; per-upload E_t exact: %s; fed-sophia and fedavg E_t identical "
              "per round: %s",
              rate, per_round_ok ? "yes" : "no", equal_ok ? "yes" : "no")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// 9. Byte-identical metrics for 1 and 8 workers through the CLI.
Outcome end_to_end_determinism() {
  const fs::path dir = scratch("determinism");
  std::string sizes;
  for (const char* workers : {"1", "8"}) {
    const std::string cmd = std::string("FEDSOPHIA_LOG=warn \"") + FEDSOPHIA_CLI +
                            "\" run --config \"" + FEDSOPHIA_DESK_CONFIG + "\" --workers " +
                            workers + " --out \"" + (dir / workers).string() + "\"";
    if (std::system(cmd.c_str()) != 0) return {false, "fedsophia run failed: " + cmd};
  }
  const std::string a = slurp(dir / "1" / "metrics.csv");
  const std::string b = slurp(dir / "8" / "metrics.csv");
  return {!a.empty() && a == b,
          fmt("metrics.csv %zu bytes (workers 1) vs %zu bytes (workers 8), %s", a.size(), b.size(),
              a == b ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"GNB estimator oracle", gnb_oracle},
      {"quadratic demo", quadratic_demo_check},
      {"clipping bound", clipping_bound},
      {"DONE direction oracle", richardson_oracle},
      {"desk-scale federated run", desk_comparison},
      {"hyperparameter sweep shape", sweep_shape},
      {"telemetry determinism and formulas", telemetry_check},
      {"end-to-end determinism", end_to_end_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  setenv("FEDSOPHIA_LOG", "warn", 0);
  configure_logging();
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.contains(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << number << " ("
              << criteria[i].first << "): " << o.detail << fmt(" [%.1f s]", secs) << std::endl;
  }
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
