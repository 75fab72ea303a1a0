#include "euler_resnet/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "euler_resnet/csv.hpp"
#include "euler_resnet/euler_ivp.hpp"
#include "euler_resnet/serialization.hpp"

namespace euler_resnet {

namespace fs = std::filesystem;

int sweep_threads() {
  const char* env = std::getenv("EULER_RESNET_THREADS");
  if (!env || !*env) return 1;
  try {
    return std::max(1, std::stoi(env));
  } catch (const std::exception&) {
    throw ConfigError(std::string("EULER_RESNET_THREADS is not an integer: ") + env);
  }
}

namespace {

/// Runs job(i) for i in [0, n) on up to `threads` workers. Results are
/// stored by index by the caller; the first exception by index is rethrown.
template <typename Job>
void run_jobs(std::size_t n, int threads, Job&& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string short_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Config text stored inside a run directory. `out` is blanked so the run's
// files are identical wherever the run directory lives.
std::string stored_config_text(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  copy.out.clear();
  return serialize_config(copy);
}

fs::path prepare_run_dir(const ExperimentConfig& config) {
  const fs::path dir = fs::path(config.out) / run_directory_name(config);
  fs::create_directories(dir);
  std::ofstream(dir / "config.ini", std::ios::binary) << stored_config_text(config);
  return dir;
}

std::vector<int> resolve_blocks(const ExperimentConfig& config, int depth) {
  if (!config.snapshot_blocks.empty()) return config.snapshot_blocks;
  std::vector<int> blocks{0, depth / 2, depth};
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  return blocks;
}

void write_meta(const fs::path& path, const ExperimentConfig& config, const RunSpec& spec,
                const RunSeeds& seeds, const RunRecord& record) {
  std::ofstream out(path, std::ios::binary);
  std::istringstream in(stored_config_text(config));
  std::string line, section;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    out << section << '.' << trim(line.substr(0, eq)) << '=' << trim(line.substr(eq + 1))
        << '\n';
  }
  out << "run.h=" << format_double(spec.h) << '\n'
      << "run.seed=" << spec.seed << '\n'
      << "run.noise_level=" << format_double(spec.noise_level) << '\n'
      << "run.seed_network=" << seeds.network << '\n'
      << "run.seed_data=" << seeds.data << '\n'
      << "run.seed_split=" << seeds.split << '\n'
      << "run.seed_plan=" << seeds.plan << '\n'
      << "run.seed_noise=" << seeds.noise << '\n'
      << "run.diverged=" << (record.diverged ? "true" : "false") << '\n'
      << "run.diverged_epoch="
      << (record.diverged_epoch ? std::to_string(*record.diverged_epoch) : "") << '\n'
      << "run.initial_test_acc=" << format_double(record.initial.test_acc) << '\n'
      << "run.final_test_acc=" << format_double(record.final_test_acc()) << '\n'
      << "run.best_test_acc=" << format_double(record.best_test_acc()) << '\n';
}

struct Split {
  Dataset train, test;
};

Split make_data(const ExperimentConfig& config, const RunSeeds& seeds, double noise_level) {
  MoonSpec moons = config.moons;
  moons.seed = seeds.data;
  auto [train_set, test_set] = split(generate_two_moons(moons), config.train_fraction, seeds.split);
  if (noise_level > 0.0) train_set = add_gaussian_noise(train_set, noise_level, seeds.noise);
  return {std::move(train_set), std::move(test_set)};
}

}  // namespace

// Euler ---------------------------------------------------------------------

EulerResult run_euler(const ExperimentConfig& config) {
  config.validate();
  if (config.euler.h_list.empty()) throw ConfigError("euler.h_list must not be empty");
  const IvpProblem problem =
      linear_decay_problem(config.euler.rate, config.euler.x0, config.euler.t_end);
  EulerResult result;
  result.run_dir = prepare_run_dir(config);
  for (double h : config.euler.h_list) {
    const Trajectory traj = euler_solve(problem, h);
    std::vector<std::string> header{"t"};
    for (Eigen::Index j = 0; j < problem.x0.size(); ++j) header.push_back("x_" + std::to_string(j));
    CsvWriter w(result.run_dir / ("trajectory_h" + short_double(h) + ".csv"), header);
    for (std::size_t i = 0; i < traj.size(); ++i) {
      w.field(traj.times[i]);
      for (Eigen::Index j = 0; j < traj.states[i].size(); ++j) w.field(traj.states[i](j));
      w.end_row();
    }
    result.summary.push_back({h, max_abs_error(traj, problem), traj.size()});
  }
  CsvWriter summary(result.run_dir / "summary.csv", {"h", "max_abs_error"});
  for (const auto& row : result.summary) {
    summary.field(row.h).field(row.max_abs_error);
    summary.end_row();
  }
  return result;
}

// Training ------------------------------------------------------------------

void write_record_csv(const RunRecord& record, const fs::path& path) {
  CsvWriter w(path, {"epoch", "train_loss", "train_acc", "test_acc", "max_block_grad_norm",
                     "input_grad_norm", "diverged"});
  for (const auto& r : record.rows) {
    w.field(r.epoch).field(r.train_loss).field(r.train_acc).field(r.test_acc);
    w.field(r.max_block_grad_norm).field(r.input_grad_norm).field(r.diverged ? 1 : 0);
    w.end_row();
  }
}

RunRecord read_record_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  RunRecord record;
  for (const auto& row : t.rows) {
    EpochRow r;
    r.epoch = std::stoi(row[t.column("epoch")]);
    r.train_loss = std::stod(row[t.column("train_loss")]);
    r.train_acc = std::stod(row[t.column("train_acc")]);
    r.test_acc = std::stod(row[t.column("test_acc")]);
    r.max_block_grad_norm = std::stod(row[t.column("max_block_grad_norm")]);
    r.input_grad_norm = std::stod(row[t.column("input_grad_norm")]);
    r.diverged = row[t.column("diverged")] == "1";
    if (r.diverged && !record.diverged) {
      record.diverged = true;
      record.diverged_epoch = r.epoch;
    }
    record.rows.push_back(r);
  }
  return record;
}

RunOutcome execute_run(const ExperimentConfig& config, const RunSpec& spec, const fs::path& dir,
                       Network* trained) {
  const RunSeeds seeds = RunSeeds::from_master(spec.seed);
  const Split data = make_data(config, seeds, spec.noise_level);

  NetworkConfig nc = config.network;
  nc.h = spec.h;
  nc.seed = seeds.network;
  Network net(nc);
  SgdMomentum opt(config.learning_rate, config.momentum);
  TrainPlan plan = config.plan;
  plan.seed = seeds.plan;

  RunOutcome outcome{spec, train(net, data.train, data.test, opt, plan), dir};
  if (!dir.empty()) {
    fs::create_directories(dir);
    write_record_csv(outcome.record, dir / "record.csv");
    write_meta(dir / "record.meta", config, spec, seeds, outcome.record);
  }
  if (trained) *trained = std::move(net);
  return outcome;
}

TrainResult run_train(const ExperimentConfig& config) {
  config.validate();
  TrainResult result;
  result.run_dir = prepare_run_dir(config);
  const RunSpec spec{config.network.h, config.seed, 0.0};
  Network net(config.network);
  const RunOutcome outcome = execute_run(config, spec, result.run_dir, &net);
  result.record = outcome.record;

  const RunSeeds seeds = RunSeeds::from_master(config.seed);
  const Split data = make_data(config, seeds, 0.0);
  write_dataset_csv(data.train, result.run_dir / "train.csv");
  write_dataset_csv(data.test, result.run_dir / "test.csv");
  if (!result.record.diverged) save_network(net, result.run_dir / "params.bin");
  if (config.plan.record_trajectories && !result.record.diverged) {
    write_snapshots_csv(trajectory_export(net, data.test, resolve_blocks(config, net.depth())),
                        result.run_dir / "snapshots.csv");
  }
  return result;
}

// Sweeps --------------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double population_std(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

namespace {

std::vector<RunOutcome> run_specs(const ExperimentConfig& config, const std::vector<RunSpec>& specs,
                                  const fs::path& runs_dir) {
  std::vector<RunOutcome> outcomes(specs.size());
  run_jobs(specs.size(), sweep_threads(), [&](std::size_t i) {
    const RunSpec& s = specs[i];
    const std::string name = "noise" + short_double(s.noise_level) + "_h" + short_double(s.h) +
                             "_seed" + std::to_string(s.seed);
    outcomes[i] = execute_run(config, s, runs_dir / name);
  });
  return outcomes;
}

}  // namespace

GridResult run_gridsearch(const ExperimentConfig& config) {
  config.validate();
  if (config.sweep.h_grid.empty() || config.sweep.seeds.empty())
    throw ConfigError("gridsearch needs a non-empty h grid and seed list");
  GridResult result;
  result.run_dir = prepare_run_dir(config);
  std::vector<RunSpec> specs;
  for (double h : config.sweep.h_grid)
    for (auto seed : config.sweep.seeds) specs.push_back({h, seed, 0.0});
  result.runs = run_specs(config, specs, result.run_dir / "runs");

  const std::size_t per_h = config.sweep.seeds.size();
  CsvWriter w(result.run_dir / "aggregate.csv",
              {"h", "median_final_test_acc", "std_final_test_acc", "diverged", "runs"});
  for (std::size_t k = 0; k < config.sweep.h_grid.size(); ++k) {
    std::vector<double> finals;
    GridRow row;
    row.h = config.sweep.h_grid[k];
    for (std::size_t s = 0; s < per_h; ++s) {
      const RunOutcome& o = result.runs[k * per_h + s];
      finals.push_back(o.record.final_test_acc());
      row.diverged += o.record.diverged ? 1 : 0;
    }
    row.runs = static_cast<int>(per_h);
    row.median_final_test_acc = median(finals);
    row.std_final_test_acc = population_std(finals);
    w.field(row.h).field(row.median_final_test_acc).field(row.std_final_test_acc);
    w.field(row.diverged).field(row.runs);
    w.end_row();
    result.aggregate.push_back(row);
  }
  return result;
}

NoiseSweepResult run_noise_sweep(const ExperimentConfig& config) {
  config.validate();
  if (config.sweep.noise_levels.empty() || config.sweep.h_grid.empty() ||
      config.sweep.seeds.empty())
    throw ConfigError("noise-sweep needs non-empty noise levels, h grid and seed list");
  NoiseSweepResult result;
  result.run_dir = prepare_run_dir(config);
  std::vector<RunSpec> specs;
  for (double level : config.sweep.noise_levels)
    for (double h : config.sweep.h_grid)
      for (auto seed : config.sweep.seeds) specs.push_back({h, seed, level});
  result.runs = run_specs(config, specs, result.run_dir / "runs");

  const std::size_t per_cell = config.sweep.seeds.size();
  CsvWriter w(result.run_dir / "aggregate.csv", {"noise_level", "h", "median_best_clean_acc",
                                                 "std_best_clean_acc", "diverged", "runs"});
  for (std::size_t cell = 0; cell * per_cell < result.runs.size(); ++cell) {
    NoiseRow row;
    row.noise_level = specs[cell * per_cell].noise_level;
    row.h = specs[cell * per_cell].h;
    std::vector<double> best;
    for (std::size_t s = 0; s < per_cell; ++s) {
      const RunOutcome& o = result.runs[cell * per_cell + s];
      best.push_back(o.record.best_test_acc());
      row.diverged += o.record.diverged ? 1 : 0;
    }
    row.runs = static_cast<int>(per_cell);
    row.median_best_clean_acc = median(best);
    row.std_best_clean_acc = population_std(best);
    w.field(row.noise_level).field(row.h).field(row.median_best_clean_acc);
    w.field(row.std_best_clean_acc).field(row.diverged).field(row.runs);
    w.end_row();
    result.aggregate.push_back(row);
  }
  return result;
}

// Diagnose ------------------------------------------------------------------

bool DiagnoseResult::all_hold() const {
  for (const auto& s : seeds)
    if (!s.prop1.holds || !s.prop2.holds || s.eq10_slack < 0.0) return false;
  return true;
}

namespace {

Network diagnose_network(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.diagnose.params.empty()) {
    NetworkConfig nc = config.network;
    nc.seed = RunSeeds::from_master(seed).network;
    return Network(nc);
  }
  Network net = [&] {
    try {
      return load_network(config.diagnose.params);
    } catch (const FormatError& e) {
      throw ConfigError(std::string("parameter file: ") + e.what());
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
  }();
  const NetworkConfig& a = net.config();
  const NetworkConfig& b = config.network;
  if (a.depth != b.depth || a.width != b.width || a.input_dim != b.input_dim ||
      a.num_classes != b.num_classes || a.use_bn != b.use_bn || a.activation != b.activation)
    throw ConfigError("parameter file shape does not match [network] in the config");
  return net;
}

void write_bounds_text(const fs::path& path, const DiagnoseSeedResult& r) {
  std::ofstream o(path, std::ios::binary);
  auto yes = [](bool b) { return b ? "yes" : "no"; };
  o << "back-propagation bound: |dL/dx_0| / |dL/dx_D| <= 1 - h + h (1 + W)^D\n"
    << "  h = " << format_double(r.prop1.h) << "\n"
    << "  depth = " << r.prop1.depth << "\n"
    << "  W = " << format_double(r.prop1.W) << "\n"
    << "  bound = " << format_double(r.prop1.bound) << "\n"
    << "  measured = " << format_double(r.prop1.measured_ratio) << "\n"
    << "  holds = " << yes(r.prop1.holds) << "\n"
    << "  slack = " << format_double(r.prop1.slack) << "\n"
    << "  degenerate = " << yes(r.prop1.degenerate) << "\n"
    << "forward noise bound: eps_D <= eps_0 + h D W\n"
    << "  epsilon_0 = " << format_double(r.prop2.epsilon0) << "\n"
    << "  W = " << format_double(r.prop2.W) << "\n"
    << "  bound = " << format_double(r.prop2.bound) << "\n"
    << "  measured = " << format_double(r.prop2.epsilonD) << "\n"
    << "  holds = " << yes(r.prop2.holds) << "\n"
    << "  slack = " << format_double(r.prop2.slack) << "\n"
    << "layerwise noise bound: eps_N <= eps_0 + h sum_{i<N} |F(x_i^e) - F(x_i)|\n"
    << "  min slack = " << format_double(r.eq10_slack) << "\n"
    << "  holds = " << yes(r.eq10_slack >= 0.0) << "\n";
}

}  // namespace

DiagnoseResult run_diagnose(const ExperimentConfig& config) {
  config.validate();
  const std::vector<int> blocks = resolve_blocks(config, config.network.depth);
  DiagnoseResult result;
  result.run_dir = prepare_run_dir(config);

  std::vector<std::uint64_t> seeds = config.diagnose.seeds;
  if (seeds.empty() || !config.diagnose.params.empty()) seeds = {config.seed};

  for (auto seed : seeds) {
    Network net = diagnose_network(config, seed);
    const RunSeeds rs = RunSeeds::from_master(seed);
    MoonSpec moons = config.moons;
    moons.seed = rs.data;
    const Dataset all = generate_two_moons(moons);
    Rng pick(rs.split);
    auto order = pick.permutation(all.size());
    order.resize(std::min<std::size_t>(order.size(),
                                       static_cast<std::size_t>(config.diagnose.batch_size)));
    const Dataset batch = all.subset(order);

    DiagnoseSeedResult r;
    r.seed = seed;
    r.gradients = gradient_profile(net, batch.features, batch.labels, Mode::eval);
    r.prop1 = proposition1_check(net, batch.features, batch.labels,
                                 jacobian_certificate(net, batch.features));

    const Matrix x0 = net.embed(batch.features);
    Rng noise_rng(rs.noise);
    Matrix perturbation = gauss_draw(noise_rng, x0.rows(), x0.cols(), 0.0, 1.0);
    for (Eigen::Index i = 0; i < perturbation.rows(); ++i)
      perturbation.row(i) *= config.diagnose.perturbation_norm / perturbation.row(i).norm();
    r.noise = noise_profile(net, x0, perturbation);
    r.eq10_slack = eq10_min_slack(r.noise, net.config().h);
    r.prop2 = proposition2_check(r.noise, branch_deviation_certificate(r.noise),
                                 net.config().h, net.depth());

    const fs::path dir = result.run_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    {
      CsvWriter w(dir / "gradient_profile.csv", {"block", "grad_norm"});
      for (std::size_t n = 0; n < r.gradients.norms.size(); ++n) {
        w.field(n).field(r.gradients.norms[n]);
        w.end_row();
      }
    }
    {
      CsvWriter w(dir / "noise_profile.csv", {"block", "epsilon", "branch_delta"});
      for (std::size_t n = 0; n < r.noise.epsilon.size(); ++n) {
        w.field(n).field(r.noise.epsilon[n]);
        if (n < r.noise.branch_delta.size())
          w.field(r.noise.branch_delta[n]);
        else
          w.field(std::string());
        w.end_row();
      }
    }
    write_bounds_text(dir / "bounds.txt", r);
    write_snapshots_csv(trajectory_export(net, batch, blocks), dir / "snapshots.csv");
    result.seeds.push_back(std::move(r));
  }

  CsvWriter w(result.run_dir / "bounds.csv",
              {"seed", "prop1_ratio", "prop1_bound", "prop1_holds", "prop2_epsilon_d",
               "prop2_bound", "prop2_holds", "eq10_min_slack"});
  for (const auto& r : result.seeds) {
    w.field(std::to_string(r.seed)).field(r.prop1.measured_ratio).field(r.prop1.bound);
    w.field(r.prop1.holds ? 1 : 0).field(r.prop2.epsilonD).field(r.prop2.bound);
    w.field(r.prop2.holds ? 1 : 0).field(r.eq10_slack);
    w.end_row();
  }
  if (!result.all_hold())
    throw InvariantViolation("diagnose: a bound check failed; see " + (result.run_dir / "bounds.csv").string());
  return result;
}

}  // namespace euler_resnet
