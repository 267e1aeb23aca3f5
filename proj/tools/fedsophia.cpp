// Command-line entry point: run, sweep, quadratic-demo, gnb-check.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsophia/commands.hpp"

int main(int argc, char** argv) {
  using namespace fedsophia;

  CLI::App app{"Federated second-order training simulator"};
  app.require_subcommand(1);

  RunOptions run_opts;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", run_opts.config, "Experiment config file")->required();
    cmd->add_option("--seed", seed, "Override the master seed");
    cmd->add_option("--out", out, "Override the output directory");
    cmd->add_option("--workers", workers, "Maximum number of devices trained in parallel")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* run = app.add_subcommand("run", "Run one federated experiment");
  add_common(run);

  CLI::App* sweep = app.add_subcommand("sweep", "Run a hyperparameter grid");
  add_common(sweep);
  std::vector<std::string> grid;
  std::string preset;
  sweep->add_option("--grid", grid,
                    "Grid block such as 'eta=0.01,0.003;J=10' (repeatable; blocks are "
                    "concatenated, axes inside a block are crossed)");
  sweep->add_option("--preset", preset, "Named grid: 'table' (3 learning rates + 3 J values)")
      ->check(CLI::IsMember({"table"}));

  CLI::App* quad = app.add_subcommand("quadratic-demo",
                                      "Compare step rules on f = t1^2 + 2 t1 t2 + 3 t2^2");
  std::string method = "gradient";
  std::optional<double> eta;
  std::size_t max_steps = 100;
  std::string quad_out = ".";
  quad->add_option("--method", method, "gradient, diag-newton or full-newton");
  quad->add_option("--eta", eta, "Step size (default 0.1 for gradient, 1 otherwise)");
  quad->add_option("--max-steps", max_steps, "Maximum number of steps");
  quad->add_option("--out", quad_out, "Directory for trajectory.csv");

  CLI::App* gnb = app.add_subcommand("gnb-check", "Monte-Carlo check of the GNB estimator");
  std::size_t draws = 10000;
  std::size_t batch = 8;
  std::uint64_t gnb_seed = 0;
  gnb->add_option("--draws", draws, "Number of estimator draws")->check(CLI::PositiveNumber);
  gnb->add_option("--batch", batch, "Mini-batch size")->check(CLI::PositiveNumber);
  gnb->add_option("--seed", gnb_seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  run_opts.seed = seed;
  if (out) run_opts.out = *out;
  run_opts.workers = workers;

  if (*run) return cmd_run(run_opts, std::cerr);
  if (*sweep) {
    if (preset == "table") {
      const auto table = table_preset_grid();
      grid.insert(grid.end(), table.begin(), table.end());
    }
    return cmd_sweep(run_opts, grid, std::cerr);
  }
  if (*quad) return cmd_quadratic_demo(method, eta, max_steps, quad_out, std::cout, std::cerr);
  if (*gnb) return cmd_gnb_check(draws, batch, gnb_seed, std::cout);
  return kExitUsage;
}
