#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "euler_resnet/data.hpp"
#include "euler_resnet/network.hpp"
#include "euler_resnet/training.hpp"

namespace euler_resnet {

/// Bad user input: unknown keys, unparsable values, invalid ranges.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ExperimentKind { euler, train, gridsearch, noise_sweep, diagnose };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct EulerSettings {
  std::vector<double> h_list{1.0, 0.5, 0.1, 0.01};
  double t_end = 3.0;
  double rate = -2.3;
  double x0 = 1.0;
  bool operator==(const EulerSettings&) const = default;
};

struct SweepSettings {
  std::vector<double> h_grid{0.001, 0.01, 0.1, 0.5, 1.0};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<double> noise_levels{0.0, 0.1, 0.3};
  bool operator==(const SweepSettings&) const = default;
};

struct DiagnoseSettings {
  /// Parameter file to analyse; empty means a fresh network per seed.
  std::string params;
  /// Fresh-network seeds; empty means [experiment] seed only.
  std::vector<std::uint64_t> seeds;
  int batch_size = 64;
  double perturbation_norm = 0.1;
  bool operator==(const DiagnoseSettings&) const = default;
};

/// Everything an experiment needs. The per-component seeds (network init,
/// data, mini-batch order, noise) are derived from one master seed; see
/// RunSeeds.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::train;
  std::string out = "runs";
  std::uint64_t seed = 0;
  /// Trunk states exported as snapshots; empty means {0, D/2, D}.
  std::vector<int> snapshot_blocks;

  NetworkConfig network{.depth = 100, .h = 0.1, .width = 16};
  double learning_rate = 0.01;
  double momentum = 0.9;
  TrainPlan plan;
  double train_fraction = 0.5;
  MoonSpec moons;

  EulerSettings euler;
  SweepSettings sweep;
  DiagnoseSettings diagnose;

  /// Range checks for every field; throws ConfigError.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Seeds for one run, derived from a master seed with derive_seed():
/// network = stream 1, data = stream 2, split = stream 3, plan = stream 4,
/// input noise = stream 5.
struct RunSeeds {
  std::uint64_t network, data, split, plan, noise;
  static RunSeeds from_master(std::uint64_t master);
};

/// INI-style text: `[section]` headers, `key = value` lines, `#` comments,
/// comma-separated lists. Keys are always written in the same order.
std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// "<kind>-<16 hex digits of FNV-1a 64 of serialize_config(config)>", with
/// `out` blanked so the name does not depend on where runs are stored.
std::string run_directory_name(const ExperimentConfig& config);

}  // namespace euler_resnet
