#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "euler_resnet/config.hpp"
#include "euler_resnet/diagnostics.hpp"
#include "euler_resnet/training.hpp"

namespace euler_resnet {

/// A checked property that must hold if the implementation is correct.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Worker count for sweeps, from EULER_RESNET_THREADS (default 1).
int sweep_threads();

struct EulerRow {
  double h = 0.0;
  double max_abs_error = 0.0;
  std::size_t points = 0;
};

struct EulerResult {
  std::filesystem::path run_dir;
  std::vector<EulerRow> summary;
};

/// One trajectory CSV per h (t, x_0..x_{d-1}) and summary.csv
/// (h, max_abs_error) for x' = rate x, x(0) = x0.
EulerResult run_euler(const ExperimentConfig& config);

/// Fully-determined single training run.
struct RunSpec {
  double h = 0.1;
  std::uint64_t seed = 0;
  double noise_level = 0.0;
};

struct RunOutcome {
  RunSpec spec;
  RunRecord record;
  std::filesystem::path dir;
};

/// Builds moons from the run seed, splits it, adds `noise_level` input noise
/// to the training part only and trains a fresh network with step `h`.
/// Writes record.csv and record.meta into `dir` when it is non-empty.
RunOutcome execute_run(const ExperimentConfig& config, const RunSpec& spec,
                       const std::filesystem::path& dir, Network* trained = nullptr);

void write_record_csv(const RunRecord& record, const std::filesystem::path& path);
RunRecord read_record_csv(const std::filesystem::path& path);

struct TrainResult {
  std::filesystem::path run_dir;
  RunRecord record;
};

/// record.csv, record.meta, params.bin, train.csv, test.csv and, when
/// plan.record_trajectories is set, snapshots.csv.
TrainResult run_train(const ExperimentConfig& config);

/// Median of a non-empty sample; even counts average the middle two.
double median(std::vector<double> values);
/// Population standard deviation (divides by n); 0 for a single value.
double population_std(const std::vector<double>& values);

struct GridRow {
  double h = 0.0;
  double median_final_test_acc = 0.0;
  double std_final_test_acc = 0.0;
  int diverged = 0;
  int runs = 0;
};

struct GridResult {
  std::filesystem::path run_dir;
  std::vector<GridRow> aggregate;
  std::vector<RunOutcome> runs;  // h-major, then seed, in config order
};

/// Trains |h_grid| x |seeds| networks; aggregate.csv has columns
/// h, median_final_test_acc, std_final_test_acc, diverged, runs.
GridResult run_gridsearch(const ExperimentConfig& config);

struct NoiseRow {
  double noise_level = 0.0;
  double h = 0.0;
  double median_best_clean_acc = 0.0;
  double std_best_clean_acc = 0.0;
  int diverged = 0;
  int runs = 0;
};

struct NoiseSweepResult {
  std::filesystem::path run_dir;
  std::vector<NoiseRow> aggregate;
  std::vector<RunOutcome> runs;
};

/// Noisy training data, clean test data; aggregate.csv has columns
/// noise_level, h, median_best_clean_acc, std_best_clean_acc, diverged, runs.
NoiseSweepResult run_noise_sweep(const ExperimentConfig& config);

struct DiagnoseSeedResult {
  std::uint64_t seed = 0;
  GradientProfile gradients;
  NoiseProfile noise;
  Proposition1Report prop1;
  Proposition2Report prop2;
  double eq10_slack = 0.0;
};

struct DiagnoseResult {
  std::filesystem::path run_dir;
  std::vector<DiagnoseSeedResult> seeds;
  bool all_hold() const;
};

/// Per seed: gradient_profile.csv, noise_profile.csv, bounds.txt and
/// snapshots.csv under seed_<n>/, plus bounds.csv summarising every seed.
/// Throws InvariantViolation (after writing everything) if a bound fails.
DiagnoseResult run_diagnose(const ExperimentConfig& config);

}  // namespace euler_resnet
