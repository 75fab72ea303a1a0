#include <gtest/gtest.h>

#include <cmath>

#include "euler_resnet/layers.hpp"
#include "euler_resnet/network.hpp"
#include "euler_resnet/serialization.hpp"
#include "test_support.hpp"

using namespace euler_resnet;
using namespace euler_resnet::test;

namespace {

ResidualBlock random_block(Eigen::Index width, double h, bool bn, Activation act,
                           std::uint64_t seed) {
  ResidualBlock block(width, h, bn, act);
  Rng rng(seed);
  block.affine1.weight = gauss_draw(rng, width, width, 0, 1.0 / std::sqrt(double(width)));
  block.affine2.weight = gauss_draw(rng, width, width, 0, 1.0 / std::sqrt(double(width)));
  block.affine1.bias = gauss_draw(rng, width, 1, 0, 0.1);
  block.affine2.bias = gauss_draw(rng, width, 1, 0, 0.1);
  return block;
}

NetworkConfig small_config(int depth, double h, bool bn, std::uint64_t seed = 1) {
  NetworkConfig c;
  c.depth = depth;
  c.h = h;
  c.width = 6;
  c.use_bn = bn;
  c.num_classes = 3;
  c.input_dim = 2;
  c.seed = seed;
  return c;
}

}  // namespace

// AffineLayer ---------------------------------------------------------------

TEST(AffineLayer, ForwardAndShapes) {
  AffineLayer layer(3, 2);
  layer.weight << 1, 2, 3, 4, 5, 6;
  layer.bias << 1, -1;
  Matrix x(1, 3);
  x << 1, 0, -1;
  const Matrix y = layer.forward(x);
  EXPECT_DOUBLE_EQ(y(0, 0), 1 - 3 + 1);
  EXPECT_DOUBLE_EQ(y(0, 1), 4 - 6 - 1);
  EXPECT_THROW(layer.forward(Matrix::Zero(1, 2)), DimensionError);
  EXPECT_EQ(layer.grad_weight.rows(), layer.weight.rows());
  EXPECT_EQ(layer.grad_weight.cols(), layer.weight.cols());
  EXPECT_EQ(layer.grad_bias.size(), layer.bias.size());
}

TEST(AffineLayer, BackwardWithoutForwardThrows) {
  AffineLayer layer(2, 2);
  EXPECT_THROW(layer.backward(Matrix::Zero(1, 2)), std::logic_error);
}

// BatchNorm -----------------------------------------------------------------

TEST(BatchNorm, TrainModeStandardizesColumns) {
  Rng rng(3);
  BatchNormState bn(4);
  const Matrix x = gauss_draw(rng, 50, 4, 2.0, 3.0);
  const Matrix y = bn.forward(x, Mode::train);
  for (Eigen::Index j = 0; j < 4; ++j) {
    const double mean = y.col(j).mean();
    const double var = (y.col(j).array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 1e-9);
    const double xmean = x.col(j).mean();
    const double xvar = (x.col(j).array() - xmean).square().mean();
    EXPECT_NEAR(var, xvar / (xvar + bn.eps), 1e-12);
  }
}

TEST(BatchNorm, ConstantColumnMapsToBeta) {
  BatchNormState bn(2);
  bn.beta << 0.25, -1.5;
  Matrix x(5, 2);
  x.col(0).setConstant(7.0);
  x.col(1) << 1, 2, 3, 4, 5;
  const Matrix y = bn.forward(x, Mode::train);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_EQ(y(i, 0), 0.25);
  EXPECT_TRUE(all_finite(y));
}

TEST(BatchNorm, EvalModeIsAffine) {
  BatchNormState bn(3);
  bn.gamma.setConstant(2.0);
  bn.beta.setConstant(3.0);
  Rng rng(4);
  const Matrix x = gauss_draw(rng, 6, 3, 0, 1);
  const Matrix y = bn.forward(x, Mode::eval);
  const double s = 2.0 / std::sqrt(1.0 + bn.eps);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(y(i, j), s * x(i, j) + 3.0, 1e-15);
  EXPECT_EQ(y, bn.forward(x, Mode::eval));
  EXPECT_EQ(y, bn.apply(x));
}

TEST(BatchNorm, TrainModeNeedsTwoRows) {
  BatchNormState bn(2);
  EXPECT_THROW(bn.forward(Matrix::Zero(1, 2), Mode::train), std::invalid_argument);
  EXPECT_NO_THROW(bn.forward(Matrix::Zero(1, 2), Mode::eval));
}

TEST(BatchNorm, RunningStatisticsMovingAverage) {
  BatchNormState bn(1);
  Matrix x(4, 1);
  x << 1, 2, 3, 6;  // mean 3, biased variance 3.5
  bn.forward(x, Mode::train);
  EXPECT_DOUBLE_EQ(bn.running_mean(0), 0.1 * 3.0);
  EXPECT_DOUBLE_EQ(bn.running_var(0), 0.9 * 1.0 + 0.1 * 3.5);
  bn.forward(x, Mode::eval);
  EXPECT_DOUBLE_EQ(bn.running_mean(0), 0.3);
}

TEST(BatchNorm, BackwardMatchesFiniteDifferences) {
  Rng rng(12);
  for (Mode mode : {Mode::train, Mode::eval}) {
    BatchNormState bn(3);
    bn.gamma = gauss_draw(rng, 3, 1, 1.0, 0.3);
    bn.beta = gauss_draw(rng, 3, 1, 0.0, 0.3);
    bn.running_mean = gauss_draw(rng, 3, 1, 0.0, 0.5);
    bn.running_var = gauss_draw(rng, 3, 1, 1.0, 0.1).cwiseAbs();
    const Matrix x = gauss_draw(rng, 7, 3, 0.5, 2.0);
    const Matrix w = gauss_draw(rng, 7, 3, 0, 1);  // loss = sum(w .* bn(x))
    bn.zero_grad();
    bn.forward(x, mode);
    const Matrix dx = bn.backward(w);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        auto f = [&](double v) {
          Matrix xp = x;
          xp(i, j) = v;
          BatchNormState copy = bn;
          return (copy.forward(xp, mode).array() * w.array()).sum();
        };
        EXPECT_LT(rel_err(dx(i, j), central_difference(f, x(i, j), 1e-6)), 1e-6);
      }
    }
    for (Eigen::Index j = 0; j < 3; ++j) {
      auto fg = [&](double v) {
        BatchNormState copy = bn;
        copy.gamma(j) = v;
        return (copy.forward(x, mode).array() * w.array()).sum();
      };
      auto fb = [&](double v) {
        BatchNormState copy = bn;
        copy.beta(j) = v;
        return (copy.forward(x, mode).array() * w.array()).sum();
      };
      EXPECT_LT(rel_err(bn.grad_gamma(j), central_difference(fg, bn.gamma(j), 1e-6)), 1e-6);
      EXPECT_LT(rel_err(bn.grad_beta(j), central_difference(fb, bn.beta(j), 1e-6)), 1e-6);
    }
  }
}

// ResidualBlock -------------------------------------------------------------

TEST(ResidualBlock, ZeroStepIsIdentity) {
  ResidualBlock block = random_block(4, 0.1, false, Activation::relu, 1);
  block.h = 0.0;
  Rng rng(2);
  const Matrix x = gauss_draw(rng, 5, 4, 0, 1);
  EXPECT_EQ(block.forward(x, Mode::train), x);
}

TEST(ResidualBlock, ZeroResidualBranchIsIdentity) {
  for (double h : {0.01, 0.1, 1.0, 3.0}) {
    ResidualBlock block = random_block(4, h, true, Activation::relu, 1);
    block.affine2.weight.setZero();
    block.affine2.bias.setZero();
    Rng rng(2);
    const Matrix x = gauss_draw(rng, 5, 4, 0, 1);
    EXPECT_EQ(block.forward(x, Mode::train), x);
  }
}

TEST(ResidualBlock, IncrementLinearInStep) {
  Rng rng(9);
  const Matrix x = gauss_draw(rng, 8, 5, 0, 1);
  ResidualBlock a = random_block(5, 0.1, false, Activation::relu, 4);
  ResidualBlock b = a;
  b.h = 0.2;
  const Matrix da = a.forward(x, Mode::eval) - x;
  const Matrix db = b.forward(x, Mode::eval) - x;
  EXPECT_LE((db - 2.0 * da).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ResidualBlock, WidthMismatchThrows) {
  ResidualBlock block(3, 0.1, false, Activation::relu);
  EXPECT_THROW(block.forward(Matrix::Zero(2, 4), Mode::eval), DimensionError);
  EXPECT_THROW(ResidualBlock(3, 0.0, false, Activation::relu), std::invalid_argument);
}

TEST(ResidualBlock, LinearBranchJacobianClosedForm) {
  for (double h : {0.1, 1.0}) {
    ResidualBlock block = random_block(4, h, false, Activation::identity, 21);
    Rng rng(5);
    const Matrix x = gauss_draw(rng, 1, 4, 0, 1);
    const Matrix expected =
        Matrix::Identity(4, 4) + h * block.affine2.weight * block.affine1.weight;
    Matrix jacobian(4, 4);
    for (Eigen::Index k = 0; k < 4; ++k) {
      block.forward(x, Mode::eval);
      jacobian.row(k) = block.backward(Matrix::Identity(4, 4).row(k));
    }
    EXPECT_LE((jacobian - expected).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((block.branch_jacobian(x.row(0)) - block.affine2.weight * block.affine1.weight)
                  .cwiseAbs()
                  .maxCoeff(),
              1e-14);
  }
}

TEST(ResidualBlock, BranchJacobianMatchesFiniteDifferences) {
  ResidualBlock block = random_block(5, 0.3, true, Activation::relu, 8);
  Rng rng(17);
  block.bn->running_mean = gauss_draw(rng, 5, 1, 0, 0.2);
  block.bn->running_var = gauss_draw(rng, 5, 1, 1, 0.2).cwiseAbs();
  const Matrix x = gauss_draw(rng, 1, 5, 0, 1);
  const Matrix J = block.branch_jacobian(x.row(0));
  for (Eigen::Index j = 0; j < 5; ++j) {
    Matrix xp = x, xm = x;
    xp(0, j) += 1e-6;
    xm(0, j) -= 1e-6;
    const Matrix col = (block.branch(xp) - block.branch(xm)) / 2e-6;
    for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(J(i, j), col(0, i), 1e-7);
  }
}

// Network -------------------------------------------------------------------

TEST(Network, EmptyTrunk) {
  NetworkConfig c = small_config(1, 0.1, false);
  c.depth = 0;
  Network net(c);
  Rng rng(1);
  const Matrix x = gauss_draw(rng, 4, 2, 0, 1);
  EXPECT_EQ(net.forward(x, Mode::eval), net.head_layer().apply(net.embed_layer().apply(x)));
}

TEST(Network, ZeroBranchesFreezeTrunk) {
  for (int depth : {1, 5, 20}) {
    for (double h : {0.1, 1.0}) {
      NetworkConfig c = small_config(depth, h, false);
      c.init_rule = InitRule::zero_branch;
      Network net(c);
      Rng rng(2);
      const Matrix x = gauss_draw(rng, 3, 2, 0, 1);
      net.forward(x, Mode::eval);
      EXPECT_EQ(net.block_states().back(), net.embed(x));
    }
  }
}

TEST(Network, TwoBlocksEqualManualComposition) {
  Network net(small_config(2, 0.3, false, 77));
  Rng rng(3);
  const Matrix x = gauss_draw(rng, 5, 2, 0, 1);
  const Matrix logits = net.forward(x, Mode::train);

  const Matrix x0 = net.embed_layer().apply(x);
  ResidualBlock b1 = net.blocks()[0], b2 = net.blocks()[1];
  const Matrix x1 = b1.forward(x0, Mode::train);
  const Matrix x2 = b2.forward(x1, Mode::train);
  EXPECT_LE((x1 - (x0 + 0.3 * b1.branch(x0))).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(logits, net.head_layer().apply(x2));
}

TEST(Network, BackwardIdentityPath) {
  NetworkConfig c = small_config(4, 1.0, false);
  c.width = 3;
  c.input_dim = 3;
  c.num_classes = 3;
  c.init_rule = InitRule::zero_branch;
  Network net(c);
  net.embed_layer().weight.setIdentity();
  net.head_layer().weight.setIdentity();
  Rng rng(4);
  const Matrix x = gauss_draw(rng, 5, 3, 0, 1);
  const Matrix g = gauss_draw(rng, 5, 3, 0, 1);
  net.forward(x, Mode::train);
  EXPECT_EQ(net.backward(g), g);
}

TEST(Network, BackwardWithoutForwardThrows) {
  Network net(small_config(2, 0.1, false));
  EXPECT_THROW(net.backward(Matrix::Zero(2, 3)), std::logic_error);
}

TEST(Network, InputDimensionMismatchThrows) {
  Network net(small_config(2, 0.1, false));
  EXPECT_THROW(net.forward(Matrix::Zero(2, 5), Mode::eval), DimensionError);
}

// Every tensor is probed, including entries with gradients near 1e-6. A step
// of 1e-4 keeps the roundoff term (~1e-12) well below those.
TEST(Network, GradientMatchesFiniteDifferencesAllParameterClasses) {
  for (int depth : {1, 3, 10}) {
    for (double h : {0.1, 1.0}) {
      for (bool bn : {false, true}) {
        Network net(small_config(depth, h, bn, 100 + depth));
        Rng rng(depth * 7 + (bn ? 1 : 0));
        const Matrix x = gauss_draw(rng, 8, 2, 0, 1);
        // Least likely class per sample keeps the loss away from saturation, so
        // gradients stay far above the central-difference noise floor.
        std::vector<int> labels;
        {
          Network tmp = net;
          const Matrix logits = tmp.forward(x, Mode::train);
          for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            Eigen::Index arg;
            logits.row(r).minCoeff(&arg);
            labels.push_back(static_cast<int>(arg));
          }
        }
        Network analytic = net;
        analytic.zero_grad();
        const auto lg = softmax_cross_entropy(analytic.forward(x, Mode::train), labels);
        const Matrix input_grad = analytic.backward(lg.logit_grad);

        double worst = 0.0;
        auto params = analytic.parameters();
        Network probe = net;
        auto probe_params = probe.parameters();
        for (std::size_t k = 0; k < params.size(); ++k) {
          // Three entries per tensor: covers weight, bias, gamma and beta.
          for (std::size_t t = 0; t < 3; ++t) {
            const std::size_t i = rng.below(params[k].value.size());
            double& slot = probe_params[k].value[i];
            const double original = slot;
            const double fd = central_difference(
                [&](double v) {
                  slot = v;
                  return batch_loss(probe, x, labels, Mode::train);
                },
                original, 1e-4);
            slot = original;
            worst = std::max(worst, rel_err(params[k].grad[i], fd));
          }
        }
        for (Eigen::Index i = 0; i < x.rows(); ++i)
          for (Eigen::Index j = 0; j < x.cols(); ++j) {
            Matrix xp = x;
            const double fd = central_difference(
                [&](double v) {
                  xp(i, j) = v;
                  return batch_loss(probe, xp, labels, Mode::train);
                },
                x(i, j), 1e-4);
            worst = std::max(worst, rel_err(input_grad(i, j), fd));
          }
        EXPECT_LT(worst, 1e-5) << "D=" << depth << " h=" << h << " bn=" << bn;
      }
    }
  }
}

TEST(Network, TelescopingIdentity) {
  for (bool bn : {false, true}) {
    Network net(small_config(12, 0.4, bn, 5));
    Rng rng(6);
    const Matrix x = gauss_draw(rng, 9, 2, 0, 1);
    if (bn) net.forward(x, Mode::train);  // move running stats away from defaults
    const TrunkTrace trace = net.trace_trunk(net.embed(x));
    for (std::size_t n = 0; n <= 12; ++n) {
      for (std::size_t N = n + 1; N <= 12; ++N) {
        Matrix sum = Matrix::Zero(x.rows(), net.width());
        for (std::size_t i = n; i < N; ++i) sum += trace.branches[i];
        const Matrix residual = trace.states[N] - trace.states[n] - 0.4 * sum;
        EXPECT_LT(frobenius_norm(residual), 1e-10);
      }
    }
  }
}

TEST(Network, StepIncrementsProportionalToH) {
  Network net(small_config(8, 1.0, false, 9));
  Rng rng(1);
  const Matrix x0 = net.embed(gauss_draw(rng, 6, 2, 0, 1));
  // Fixed weights and a fixed trunk point: |x_{n+1} - x_n| = h |F(x_n)|.
  auto max_step = [&](double h) {
    Network copy = net;
    copy.set_step(h);
    const Matrix x1 = copy.blocks()[0].branch(x0);
    return h * frobenius_norm(x1);
  };
  const double base = max_step(1.0);
  for (double h : {0.5, 0.1}) {
    Network copy = net;
    copy.set_step(h);
    ResidualBlock block = copy.blocks()[0];
    const double measured = frobenius_norm(Matrix(block.forward(x0, Mode::eval) - x0));
    EXPECT_NEAR(measured / base, h, 1e-9 * h);
    EXPECT_NEAR(max_step(h) / base, h, 1e-9 * h);
  }
}

TEST(Network, EvalForwardIsBitIdentical) {
  Network net(small_config(6, 0.5, true, 3));
  Rng rng(1);
  const Matrix x = gauss_draw(rng, 10, 2, 0, 1);
  net.forward(x, Mode::train);
  const Matrix a = net.forward(x, Mode::eval);
  const Matrix b = net.forward(x, Mode::eval);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, net.predict(x));
}

TEST(Network, InitializationStatistics) {
  NetworkConfig c = small_config(50, 0.1, true, 4);
  c.width = 32;
  Network net(c);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& block : net.blocks()) {
    sum += block.affine1.weight.sum();
    sq += block.affine1.weight.squaredNorm();
    n += static_cast<std::size_t>(block.affine1.weight.size());
    EXPECT_EQ(block.affine1.bias, Vector::Zero(32));
    EXPECT_EQ(block.affine2.bias, Vector::Zero(32));
    EXPECT_EQ(block.bn->gamma, Vector::Ones(32));
    EXPECT_EQ(block.bn->beta, Vector::Zero(32));
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(std::sqrt(sq / n), 1.0 / std::sqrt(32.0), 0.01);
}

// Serialization ---------------------------------------------------------------

TEST(Serialization, RoundTripPreservesOutputsAndBytes) {
  Network net(small_config(5, 0.2, true, 11));
  Rng rng(2);
  const Matrix x = gauss_draw(rng, 6, 2, 0, 1);
  net.forward(x, Mode::train);  // non-default running stats
  const auto bytes = encode_network(net);
  Network copy = decode_network(bytes);
  EXPECT_EQ(copy.config(), net.config());
  EXPECT_EQ(copy.predict(x), net.predict(x));
  EXPECT_EQ(encode_network(copy), bytes);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 7), "EULRNET");
}

TEST(Serialization, DetectsCorruptionAndTruncation) {
  Network net(small_config(2, 0.2, false, 1));
  auto bytes = encode_network(net);
  auto flipped = bytes;
  flipped[100] ^= 0x01;
  EXPECT_THROW(decode_network(flipped), FormatError);
  auto cut = bytes;
  cut.resize(50);
  EXPECT_THROW(decode_network(cut), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_network(bad_magic), FormatError);
}

TEST(Serialization, HeaderLayoutIsLittleEndian) {
  NetworkConfig c = small_config(3, 0.5, true, 0x0102030405060708ULL);
  Network net(c);
  const auto bytes = encode_network(net);
  EXPECT_EQ(bytes[8], 1);   // version
  EXPECT_EQ(bytes[12], 1);  // use_bn flag
  EXPECT_EQ(bytes[16], 3);  // depth
  EXPECT_EQ(bytes[48], 0x08);
  EXPECT_EQ(bytes[55], 0x01);
  std::uint64_t count = 0;
  for (int i = 0; i < 8; ++i) count |= std::uint64_t(bytes[72 + i]) << (8 * i);
  EXPECT_EQ(count, net.parameter_count() + 3 * 2 * 6);
  EXPECT_EQ(bytes.size(), 80 + 8 * count + 8);
}

TEST(Network, ParameterListing) {
  Network plain(small_config(2, 0.1, false));
  Network normed(small_config(2, 0.1, true));
  std::vector<std::string> names;
  for (const auto& p : normed.parameters()) names.push_back(p.name);
  EXPECT_EQ(names, (std::vector<std::string>{
                       "embed.weight", "embed.bias", "block0.affine1.weight", "block0.bn.gamma",
                       "block0.bn.beta", "block0.affine2.weight", "block0.affine2.bias",
                       "block1.affine1.weight", "block1.bn.gamma", "block1.bn.beta",
                       "block1.affine2.weight", "block1.affine2.bias", "head.weight",
                       "head.bias"}));
  // embed 2*6+6, blocks 2*(36+6+36+6), head 6*3+3
  EXPECT_EQ(plain.parameter_count(), 18u + 2 * 84u + 21u);
  EXPECT_EQ(normed.parameter_count(), 18u + 2 * (36u + 12u + 36u + 6u) + 21u);
}
