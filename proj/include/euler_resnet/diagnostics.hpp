#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "euler_resnet/data.hpp"
#include "euler_resnet/network.hpp"

namespace euler_resnet {

/// |dL/dx_n| at every block boundary n = 0..D after one backward pass.
struct GradientProfile {
  std::vector<double> norms;   // Frobenius over the batch, length D + 1
  Matrix per_sample;           // batch x (D + 1), Euclidean per row
  bool exploded = false;
  std::optional<std::size_t> first_nonfinite;

  double output_norm() const { return norms.back(); }
};

/// One forward + backward of mean cross-entropy on (batch, labels).
GradientProfile gradient_profile(Network& net, const Matrix& batch,
                                 const std::vector<int>& labels,
                                 Mode mode = Mode::eval);

/// Upper bounds w_i >= |dF_i/dx|_2 at every evaluated trunk point.
struct LipschitzCertificate {
  std::vector<double> block_bounds;
  bool exact = true;  // false when power iteration with a safety factor was used

  double max_bound() const;
};

/// Widths up to this use an exact SVD per sample Jacobian.
inline constexpr Eigen::Index kExactJacobianMaxWidth = 16;
inline constexpr double kPowerIterationSafety = 1.05;
inline constexpr int kPowerIterations = 200;

/// Certificate from the eval-mode trajectory of `batch` (raw network input).
LipschitzCertificate jacobian_certificate(const Network& net, const Matrix& batch);

struct Proposition1Report {
  double h = 0.0;
  int depth = 0;
  double W = 0.0;
  double bound = 0.0;           // 1 - h + h (1 + W)^D
  double measured_ratio = 0.0;  // worst per-sample |dL/dx_0| / |dL/dx_D|
  double slack = 0.0;           // bound - measured_ratio
  bool holds = false;
  bool degenerate = false;      // every sample had |dL/dx_D| == 0
};

/// 1 - h + h (1 + W)^D.
double proposition1_bound(double h, double W, int depth);

/// Checks the back-propagation bound per sample (eval mode) and reports the
/// worst case over the batch.
Proposition1Report proposition1_check(Network& net, const Matrix& batch,
                                      const std::vector<int>& labels,
                                      const LipschitzCertificate& cert);

/// Distances between the clean and perturbed trunk trajectories.
struct NoiseProfile {
  std::vector<double> epsilon;       // |x_n^e - x_n|_F, n = 0..D
  std::vector<double> branch_delta;  // |F(x_i^e) - F(x_i)|_F, i = 0..D-1
  Matrix per_sample_epsilon;         // batch x (D + 1)
  Matrix per_sample_branch_delta;    // batch x D

  int depth() const { return static_cast<int>(branch_delta.size()); }
};

/// Eval-mode trunk passes from x0 and x0 + perturbation (both trunk-space).
NoiseProfile noise_profile(const Network& net, const Matrix& x0,
                           const Matrix& perturbation);

/// Per-sample check of |x_N^e - x_N| <= eps_0 + h sum_{i<N} |dF_i| + tol for
/// every N. Returns the smallest slack (negative means violated).
double eq10_min_slack(const NoiseProfile& profile, double h, double tol = 1e-9);

/// W = max over samples and blocks of |F(x_i^e) - F(x_i)|.
LipschitzCertificate branch_deviation_certificate(const NoiseProfile& profile);

struct Proposition2Report {
  double epsilon0 = 0.0;
  double epsilonD = 0.0;
  double W = 0.0;
  double bound = 0.0;  // eps_0 + h D W
  double slack = 0.0;
  bool holds = false;
};

/// eps_D <= eps_0 + h D W checked per sample; reports the worst sample.
Proposition2Report proposition2_check(const NoiseProfile& profile,
                                      const LipschitzCertificate& cert, double h,
                                      int depth);

struct Snapshot {
  int block = 0;
  Matrix features;  // x_block, batch x width
  std::vector<int> labels;
};

/// Eval-mode trunk states x_n for each requested n in [0, D].
std::vector<Snapshot> trajectory_export(const Network& net, const Dataset& d,
                                        const std::vector<int>& block_indices);
/// Columns block, x0..x{w-1}, label.
void write_snapshots_csv(const std::vector<Snapshot>& snaps,
                         const std::filesystem::path& path);

struct FiniteDifferenceOptions {
  int samples = 20;
  double delta = 1e-5;
  std::uint64_t seed = 0;
  Mode mode = Mode::train;
  /// Only parameters whose name contains this string (e.g. ".gamma").
  std::string name_contains;
};

/// Central differences of the mean cross-entropy on `samples` parameter
/// entries chosen uniformly at random; returns the max of
/// |analytic - fd| / (|analytic| + |fd| + 1e-8). `net` is not modified.
double finite_difference_oracle(const Network& net, const Matrix& batch,
                                const std::vector<int>& labels,
                                const FiniteDifferenceOptions& options);

/// Same relative error over every entry of the raw input batch.
double input_gradient_fd_error(const Network& net, const Matrix& batch,
                               const std::vector<int>& labels, double delta,
                               Mode mode = Mode::train);

}  // namespace euler_resnet
