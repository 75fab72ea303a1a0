#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "euler_resnet/csv.hpp"
#include "euler_resnet/diagnostics.hpp"
#include "euler_resnet/training.hpp"
#include "test_support.hpp"

using namespace euler_resnet;
using namespace euler_resnet::test;

namespace {

NetworkConfig config(int depth, double h, bool bn, std::uint64_t seed, int width = 8) {
  NetworkConfig c;
  c.depth = depth;
  c.h = h;
  c.width = width;
  c.use_bn = bn;
  c.seed = seed;
  return c;
}

// Eval-mode BN with non-trivial running statistics.
void randomize_running_stats(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& block : net.blocks()) {
    if (!block.bn) continue;
    block.bn->running_mean = gauss_draw(rng, net.width(), 1, 0, 0.3);
    block.bn->running_var = gauss_draw(rng, net.width(), 1, 1, 0.3).cwiseAbs();
  }
}

}  // namespace

// Finite-difference oracle ---------------------------------------------------

TEST(FiniteDifferenceOracle, NearExactOnLinearNet) {
  NetworkConfig c = config(1, 0.5, false, 3);
  c.activation = Activation::identity;
  Network net(c);
  Rng rng(1);
  const Matrix x = gauss_draw(rng, 10, 2, 0, 1);
  const auto labels = random_labels(rng, 10, 2);
  FiniteDifferenceOptions opt;
  opt.samples = 20;
  EXPECT_LT(finite_difference_oracle(net, x, labels, opt), 1e-8);
}

TEST(FiniteDifferenceOracle, DeepBatchNormNet) {
  Network net(config(10, 0.1, true, 4));
  Rng rng(2);
  const Matrix x = gauss_draw(rng, 16, 2, 0, 1);
  const auto labels = random_labels(rng, 16, 2);
  FiniteDifferenceOptions opt;
  opt.seed = 9;
  EXPECT_LT(finite_difference_oracle(net, x, labels, opt), 1e-5);
  opt.name_contains = ".gamma";
  EXPECT_LT(finite_difference_oracle(net, x, labels, opt), 1e-5);
  opt.name_contains = ".beta";
  EXPECT_LT(finite_difference_oracle(net, x, labels, opt), 1e-5);
}

TEST(FiniteDifferenceOracle, ErrorShrinksWithStep) {
  Network net(config(3, 0.5, false, 5));
  Rng rng(3);
  const Matrix x = gauss_draw(rng, 8, 2, 0, 1);
  const auto labels = random_labels(rng, 8, 2);
  FiniteDifferenceOptions coarse;
  coarse.delta = 1e-2;
  coarse.seed = 4;
  FiniteDifferenceOptions fine = coarse;
  fine.delta = 1e-5;
  EXPECT_LT(finite_difference_oracle(net, x, labels, fine),
            finite_difference_oracle(net, x, labels, coarse));
}

TEST(FiniteDifferenceOracle, LeavesNetworkUntouched) {
  Network net(config(2, 0.1, true, 6));
  Rng rng(4);
  const Matrix x = gauss_draw(rng, 8, 2, 0, 1);
  const Matrix before = net.predict(x);
  finite_difference_oracle(net, x, random_labels(rng, 8, 2), FiniteDifferenceOptions{});
  EXPECT_EQ(net.predict(x), before);
}

TEST(FiniteDifferenceOracle, InputGradients) {
  Network net(config(3, 1.0, false, 7));
  Rng rng(5);
  const Matrix x = gauss_draw(rng, 6, 2, 0, 0.5);
  EXPECT_LT(input_gradient_fd_error(net, x, random_labels(rng, 6, 2), 1e-5), 1e-5);
}

// Gradient profile ------------------------------------------------------------

TEST(GradientProfile, ConstantThroughZeroBranches) {
  NetworkConfig c = config(20, 1.0, false, 8);
  c.init_rule = InitRule::zero_branch;
  Network net(c);
  Rng rng(6);
  const Matrix x = gauss_draw(rng, 12, 2, 0, 1);
  const GradientProfile p = gradient_profile(net, x, random_labels(rng, 12, 2));
  ASSERT_EQ(p.norms.size(), 21u);
  for (double n : p.norms) EXPECT_EQ(n, p.norms.back());
  EXPECT_FALSE(p.exploded);
}

TEST(GradientProfile, SingleBlockRespectsJacobianBound) {
  for (double h : {0.1, 1.0}) {
    Network net(config(1, h, false, 9));
    Rng rng(7);
    const Matrix x = gauss_draw(rng, 20, 2, 0, 1);
    const GradientProfile p = gradient_profile(net, x, random_labels(rng, 20, 2));
    const LipschitzCertificate cert = jacobian_certificate(net, x);
    for (Eigen::Index s = 0; s < x.rows(); ++s)
      EXPECT_LE(p.per_sample(s, 0), (1 + h * cert.block_bounds[0]) * p.per_sample(s, 1) + 1e-12);
  }
}

TEST(GradientProfile, LargeStepAmplifiesMore) {
  const int depth = 50;
  Rng rng(8);
  const Matrix x = gauss_draw(rng, 32, 2, 0, 1);
  const auto labels = random_labels(rng, 32, 2);
  auto spread = [&](double h) {
    Network net(config(depth, h, false, 10, 16));
    const GradientProfile p = gradient_profile(net, x, labels);
    return p.norms.front() / p.norms.back();
  };
  const double large = spread(1.0), small = spread(0.1);
  EXPECT_GT(large, small);
  EXPECT_GT(large, 10.0);
}

TEST(JacobianCertificate, ExactAndEstimatedAgreeInRegime) {
  Network narrow(config(3, 0.5, true, 11, 16));
  randomize_running_stats(narrow, 1);
  Rng rng(9);
  const Matrix x = gauss_draw(rng, 10, 2, 0, 1);
  const LipschitzCertificate exact = jacobian_certificate(narrow, x);
  EXPECT_TRUE(exact.exact);
  ASSERT_EQ(exact.block_bounds.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    // Any sample's Jacobian norm is below the certificate.
    const TrunkTrace t = narrow.trace_trunk(narrow.embed(x));
    for (Eigen::Index s = 0; s < x.rows(); ++s)
      EXPECT_LE(spectral_norm(narrow.blocks()[i].branch_jacobian(t.states[i].row(s))),
                exact.block_bounds[i] + 1e-12);
  }
  Network wide(config(2, 0.5, false, 12, 24));
  const LipschitzCertificate approx = jacobian_certificate(wide, x);
  EXPECT_FALSE(approx.exact);
  const TrunkTrace t = wide.trace_trunk(wide.embed(x));
  for (Eigen::Index s = 0; s < x.rows(); ++s)
    EXPECT_LE(spectral_norm(wide.blocks()[0].branch_jacobian(t.states[0].row(s))),
              approx.block_bounds[0]);
}

// Bounds ----------------------------------------------------------------------

TEST(Proposition1, BoundArithmetic) {
  EXPECT_DOUBLE_EQ(proposition1_bound(0.3, 0.0, 50), 1.0);
  EXPECT_NEAR(proposition1_bound(1.0, 0.1, 3), 1.331, 1e-12);
  EXPECT_NEAR(proposition1_bound(0.5, 1.0, 2), 1 - 0.5 + 0.5 * 4, 1e-15);
  // (1 + hW)^D never exceeds the bound for h <= 1.
  for (double h : {0.01, 0.1, 0.5, 1.0})
    for (double W : {0.1, 1.0, 3.0})
      for (int D : {1, 5, 20})
        EXPECT_LE(std::pow(1 + h * W, D), proposition1_bound(h, W, D) * (1 + 1e-12));
}

TEST(Proposition1, HoldsOnRandomNets) {
  for (bool bn : {false, true})
    for (double h : {0.1, 1.0})
      for (int depth : {5, 20}) {
        Network net(config(depth, h, bn, 13 + depth, 8));
        if (bn) randomize_running_stats(net, 2);
        Rng rng(depth);
        const Matrix x = gauss_draw(rng, 16, 2, 0, 1);
        const auto labels = random_labels(rng, 16, 2);
        const auto cert = jacobian_certificate(net, x);
        const auto report = proposition1_check(net, x, labels, cert);
        EXPECT_TRUE(report.holds) << "h=" << h << " D=" << depth << " bn=" << bn;
        EXPECT_GE(report.measured_ratio, 0.0);
        EXPECT_DOUBLE_EQ(report.bound, proposition1_bound(h, cert.max_bound(), depth));
      }
}

TEST(Proposition1, ZeroBranchRatioIsOne) {
  NetworkConfig c = config(10, 1.0, false, 14);
  c.init_rule = InitRule::zero_branch;
  Network net(c);
  Rng rng(11);
  const Matrix x = gauss_draw(rng, 8, 2, 0, 1);
  const auto labels = random_labels(rng, 8, 2);
  const auto report = proposition1_check(net, x, labels, jacobian_certificate(net, x));
  EXPECT_EQ(report.W, 0.0);
  EXPECT_EQ(report.bound, 1.0);
  EXPECT_NEAR(report.measured_ratio, 1.0, 1e-15);
  EXPECT_TRUE(report.holds);
}

TEST(Proposition2, BoundArithmetic) {
  NoiseProfile profile;
  profile.per_sample_epsilon.resize(1, 6);
  profile.per_sample_epsilon << 0.1, 0.2, 0.3, 0.4, 0.5, 0.55;
  profile.per_sample_branch_delta = Matrix::Constant(1, 5, 1.0);
  LipschitzCertificate cert;
  cert.block_bounds.assign(5, 1.0);
  const auto report = proposition2_check(profile, cert, 0.1, 5);
  EXPECT_NEAR(report.bound, 0.6, 1e-15);
  EXPECT_NEAR(report.slack, 0.05, 1e-15);
  EXPECT_TRUE(report.holds);
  profile.per_sample_epsilon(0, 5) = 0.61;
  EXPECT_FALSE(proposition2_check(profile, cert, 0.1, 5).holds);
}

TEST(NoiseProfile, ZeroPerturbation) {
  Network net(config(6, 0.5, false, 15));
  Rng rng(12);
  const Matrix x0 = net.embed(gauss_draw(rng, 5, 2, 0, 1));
  const NoiseProfile p = noise_profile(net, x0, Matrix::Zero(5, net.width()));
  for (double e : p.epsilon) EXPECT_EQ(e, 0.0);
  for (double d : p.branch_delta) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(p.depth(), 6);
}

TEST(NoiseProfile, EpsilonZeroIsPerturbationNorm) {
  Network net(config(4, 0.5, false, 16));
  Rng rng(13);
  const Matrix x0 = net.embed(gauss_draw(rng, 5, 2, 0, 1));
  const Matrix delta = gauss_draw(rng, 5, net.width(), 0, 0.1);
  const NoiseProfile p = noise_profile(net, x0, delta);
  EXPECT_NEAR(p.epsilon[0], frobenius_norm(delta), 1e-15);
  for (Eigen::Index s = 0; s < 5; ++s)
    EXPECT_NEAR(p.per_sample_epsilon(s, 0), delta.row(s).norm(), 1e-15);
}

TEST(NoiseProfile, TelescopedBoundAndProposition2Hold) {
  for (double h : {0.1, 1.0})
    for (int depth : {5, 20, 50})
      for (double eps : {0.01, 0.1}) {
        Network net(config(depth, h, false, 100 + depth, 8));
        Rng rng(depth * 3);
        const Matrix x0 = net.embed(gauss_draw(rng, 16, 2, 0, 1));
        Matrix delta = gauss_draw(rng, 16, net.width(), 0, 1);
        for (Eigen::Index s = 0; s < delta.rows(); ++s) delta.row(s) *= eps / delta.row(s).norm();
        const NoiseProfile p = noise_profile(net, x0, delta);
        EXPECT_GE(eq10_min_slack(p, h), 0.0);
        const auto report = proposition2_check(p, branch_deviation_certificate(p), h, depth);
        EXPECT_TRUE(report.holds);
        EXPECT_NEAR(report.epsilon0, eps, 1e-15);
      }
}

// Trajectory export -------------------------------------------------------------

TEST(TrajectoryExport, RangeChecked) {
  Network net(config(4, 0.5, false, 17));
  MoonSpec s;
  s.n_per_class = 10;
  const Dataset d = generate_two_moons(s);
  EXPECT_THROW(trajectory_export(net, d, {5}), std::out_of_range);
  EXPECT_THROW(trajectory_export(net, d, {-1}), std::out_of_range);
  const auto snaps = trajectory_export(net, d, {0, 4});
  ASSERT_EQ(snaps.size(), 2u);
  EXPECT_EQ(snaps[0].features, net.embed(d.features));
  EXPECT_EQ(snaps[1].labels, d.labels);
}

TEST(TrajectoryExport, TrainedTrunkSeparatesClasses) {
  MoonSpec s;
  s.n_per_class = 300;
  s.seed = 3;
  auto [train_set, test_set] = split(generate_two_moons(s), 0.5, 4);
  Network net(config(10, 0.5, false, 18));
  SgdMomentum opt(0.01, 0.9);
  TrainPlan plan;
  plan.epochs = 40;
  train(net, train_set, test_set, opt, plan);
  const auto snaps = trajectory_export(net, test_set, {0, 10});
  auto separation = [&](const Snapshot& snap) {
    Eigen::RowVectorXd c[2] = {Eigen::RowVectorXd::Zero(net.width()),
                               Eigen::RowVectorXd::Zero(net.width())};
    int counts[2] = {0, 0};
    for (std::size_t i = 0; i < snap.labels.size(); ++i) {
      c[snap.labels[i]] += snap.features.row(Eigen::Index(i));
      ++counts[snap.labels[i]];
    }
    c[0] /= counts[0];
    c[1] /= counts[1];
    double spread = 0;
    for (std::size_t i = 0; i < snap.labels.size(); ++i)
      spread += (snap.features.row(Eigen::Index(i)) - c[snap.labels[i]]).squaredNorm();
    return (c[0] - c[1]).norm() / std::sqrt(spread / double(snap.labels.size()));
  };
  EXPECT_GT(separation(snaps[1]), separation(snaps[0]));

  const auto path = std::filesystem::temp_directory_path() / "euler_resnet_snapshots.csv";
  write_snapshots_csv(snaps, path);
  const CsvTable table = read_csv(path);
  EXPECT_EQ(table.header.front(), "block");
  EXPECT_EQ(table.header.back(), "label");
  EXPECT_EQ(table.header.size(), std::size_t(net.width()) + 2);
  EXPECT_EQ(table.rows.size(), 2 * test_set.size());
  std::filesystem::remove(path);
}
