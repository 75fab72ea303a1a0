#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "euler_resnet/tensor_core.hpp"

namespace euler_resnet {

enum class Mode { train, eval };
enum class Activation { relu, identity };

/// Mutable view of one parameter tensor and its gradient, flattened.
struct ParameterRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

/// Non-trainable state that is still part of a saved network.
struct BufferRef {
  std::string name;
  std::span<double> value;
};

/// y = x W^T + b, one sample per row of x.
class AffineLayer {
 public:
  AffineLayer() = default;
  AffineLayer(Eigen::Index in_dim, Eigen::Index out_dim);

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }

  Matrix forward(const Matrix& x);
  Matrix apply(const Matrix& x) const;
  /// Accumulates grad_weight/grad_bias and returns dL/dx.
  Matrix backward(const Matrix& grad_out);
  void zero_grad();
  void append_parameters(const std::string& prefix,
                         std::vector<ParameterRef>& out, bool with_bias = true);

  Matrix weight;  // out_dim x in_dim
  Vector bias;    // out_dim
  Matrix grad_weight;
  Vector grad_bias;

 private:
  std::optional<Matrix> cached_input_;
};

/// Per-feature batch normalization over the rows of a batch.
///
/// Train mode normalizes with the biased batch variance and updates
/// running = (1 - momentum) running + momentum batch. Eval mode is the
/// fixed affine map gamma (x - running_mean) / sqrt(running_var + eps) + beta.
class BatchNormState {
 public:
  static constexpr double kDefaultEps = 1e-5;
  static constexpr double kDefaultMomentum = 0.1;

  BatchNormState() = default;
  explicit BatchNormState(Eigen::Index features, double eps = kDefaultEps,
                          double momentum = kDefaultMomentum);

  Eigen::Index features() const { return gamma.size(); }

  Matrix forward(const Matrix& x, Mode mode);
  Matrix apply(const Matrix& x) const;  // eval mode, no caching
  Matrix backward(const Matrix& grad_out);
  void zero_grad();
  /// Per-feature multiplier gamma / sqrt(running_var + eps) used in eval mode.
  Vector eval_scale() const;

  void append_parameters(const std::string& prefix,
                         std::vector<ParameterRef>& out);
  void append_buffers(const std::string& prefix, std::vector<BufferRef>& out);

  Vector gamma, beta;
  Vector running_mean, running_var;
  Vector grad_gamma, grad_beta;
  double eps = kDefaultEps;
  double momentum = kDefaultMomentum;

 private:
  struct Cache {
    Mode mode;
    Matrix normalized;
    Vector inv_std;
  };
  std::optional<Cache> cache_;
};

/// x -> x + h F(x) with F = affine2 . act . [bn] . affine1.
///
/// With BN, affine1.bias stays at zero and is not a parameter: batch
/// normalization subtracts any per-feature shift, so its gradient is zero.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(Eigen::Index width, double h, bool use_bn,
                Activation activation);

  Eigen::Index width() const { return affine1.in_dim(); }
  bool has_bn() const { return bn.has_value(); }

  Matrix forward(const Matrix& x, Mode mode);
  /// F(x) in eval mode, without touching caches.
  Matrix branch(const Matrix& x) const;
  /// dF/dx for a single sample (row vector x), eval mode; width x width.
  Matrix branch_jacobian(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Matrix backward(const Matrix& grad_out);
  void zero_grad();

  /// F(x) from the most recent forward().
  const Matrix& last_branch() const;

  void append_parameters(const std::string& prefix,
                         std::vector<ParameterRef>& out);
  void append_buffers(const std::string& prefix, std::vector<BufferRef>& out);

  double h = 1.0;
  Activation activation = Activation::relu;
  AffineLayer affine1, affine2;
  std::optional<BatchNormState> bn;

 private:
  std::optional<Matrix> pre_activation_;  // input of the activation
  std::optional<Matrix> branch_;
};

}  // namespace euler_resnet
