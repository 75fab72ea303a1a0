// Experiment runner: euler | train | gridsearch | noise-sweep | diagnose.
//
// Exit codes: 0 success (diverged training runs included), 2 usage or
// config error, 3 internal invariant violation, 1 any other failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "euler_resnet/config.hpp"
#include "euler_resnet/experiments.hpp"

namespace er = euler_resnet;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInvariant = 3;

struct Overrides {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<double> h;
  std::optional<int> depth;
};

void add_common_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "Experiment config file (INI)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Master seed (overrides config)");
  cmd->add_option("--h", o.h, "Step factor h (overrides config)");
  cmd->add_option("--depth", o.depth, "Number of residual blocks (overrides config)");
}

er::ExperimentConfig resolve(const Overrides& o, er::ExperimentKind kind) {
  er::ExperimentConfig c = o.config_path.empty() ? er::ExperimentConfig{}
                                                 : er::load_config(o.config_path);
  c.kind = kind;
  if (o.out) c.out = *o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.h) {
    c.network.h = *o.h;
    if (kind == er::ExperimentKind::euler) c.euler.h_list = {*o.h};
  }
  if (o.depth) c.network.depth = *o.depth;
  c.validate();
  return c;
}

void report(const er::EulerResult& r) {
  std::cout << "run directory: " << r.run_dir.string() << "\n";
  for (const auto& row : r.summary)
    std::cout << "  h=" << row.h << "  points=" << row.points
              << "  max_abs_error=" << row.max_abs_error << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Euler-viewed residual networks: step-factor experiments"};
  // -h would clash with --h, the step factor.
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  Overrides o;
  auto* euler = app.add_subcommand("euler", "Explicit Euler on x' = rate x for each h");
  auto* train = app.add_subcommand("train", "Train one network on two moons");
  auto* grid = app.add_subcommand("gridsearch", "Train over an h grid and seed list");
  auto* noise = app.add_subcommand("noise-sweep", "Noisy training, clean test, per noise level");
  auto* diag = app.add_subcommand("diagnose", "Gradient/noise profiles and bound checks");
  for (auto* cmd : {euler, train, grid, noise, diag}) add_common_flags(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (euler->parsed()) {
      report(er::run_euler(resolve(o, er::ExperimentKind::euler)));
    } else if (train->parsed()) {
      const auto r = er::run_train(resolve(o, er::ExperimentKind::train));
      std::cout << "run directory: " << r.run_dir.string() << "\n"
                << "  final test accuracy: " << r.record.final_test_acc()
                << (r.record.diverged ? "  (diverged)" : "") << "\n";
    } else if (grid->parsed()) {
      const auto r = er::run_gridsearch(resolve(o, er::ExperimentKind::gridsearch));
      std::cout << "run directory: " << r.run_dir.string() << "\n";
      for (const auto& row : r.aggregate)
        std::cout << "  h=" << row.h << "  median=" << row.median_final_test_acc
                  << "  std=" << row.std_final_test_acc << "  diverged=" << row.diverged << "/"
                  << row.runs << "\n";
    } else if (noise->parsed()) {
      const auto r = er::run_noise_sweep(resolve(o, er::ExperimentKind::noise_sweep));
      std::cout << "run directory: " << r.run_dir.string() << "\n";
      for (const auto& row : r.aggregate)
        std::cout << "  noise=" << row.noise_level << "  h=" << row.h
                  << "  median_best=" << row.median_best_clean_acc
                  << "  std=" << row.std_best_clean_acc << "\n";
    } else if (diag->parsed()) {
      const auto r = er::run_diagnose(resolve(o, er::ExperimentKind::diagnose));
      std::cout << "run directory: " << r.run_dir.string() << "\n";
      for (const auto& s : r.seeds)
        std::cout << "  seed " << s.seed << ": ratio=" << s.prop1.measured_ratio
                  << " bound=" << s.prop1.bound << " holds=" << (s.prop1.holds ? "yes" : "no")
                  << " | eps_D=" << s.prop2.epsilonD << " bound=" << s.prop2.bound
                  << " holds=" << (s.prop2.holds ? "yes" : "no") << "\n";
    }
  } catch (const er::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const er::InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
