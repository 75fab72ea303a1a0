#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "euler_resnet/layers.hpp"

namespace euler_resnet {

enum class InitRule {
  /// W ~ N(0, (gain / sqrt(in_dim))^2), biases 0, gamma 1, beta 0.
  gaussian_fan_in,
  /// As gaussian_fan_in, then every affine2 is zeroed so F == 0.
  zero_branch,
};

struct NetworkConfig {
  int depth = 10;
  double h = 0.1;
  int width = 16;
  bool use_bn = false;
  int num_classes = 2;
  int input_dim = 2;
  std::uint64_t seed = 0;
  double init_gain = 1.0;
  InitRule init_rule = InitRule::gaussian_fan_in;
  Activation activation = Activation::relu;

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

std::string to_string(InitRule rule);
std::string to_string(Activation activation);
InitRule init_rule_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

/// Trunk states x_0..x_D and branch outputs F(x_0)..F(x_{D-1}) of one
/// eval-mode pass.
struct TrunkTrace {
  std::vector<Matrix> states;
  std::vector<Matrix> branches;
};

/// embed -> D residual blocks sharing one h -> linear head.
class Network {
 public:
  /// depth == 0 is accepted here so the empty-trunk case can be exercised;
  /// NetworkConfig::validate() still requires depth >= 1.
  explicit Network(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }
  int depth() const { return static_cast<int>(blocks_.size()); }
  Eigen::Index width() const { return embed_.out_dim(); }

  /// Logits, caching activations for backward().
  Matrix forward(const Matrix& x, Mode mode);
  /// Returns dL/d(raw input) and fills block_input_grads().
  Matrix backward(const Matrix& logit_grad);
  void zero_grad();

  /// Eval-mode logits without touching caches.
  Matrix predict(const Matrix& x) const;
  Matrix embed(const Matrix& x) const;
  /// Eval-mode trunk pass starting from trunk input x0 (already embedded).
  TrunkTrace trace_trunk(const Matrix& x0) const;
  Matrix head_logits(const Matrix& trunk_out) const;

  /// dL/dx_n for n = 0..D from the last backward().
  const std::vector<Matrix>& block_input_grads() const { return trunk_grads_; }
  /// x_0..x_D from the last forward().
  const std::vector<Matrix>& block_states() const { return trunk_states_; }

  /// Changes h on every block.
  void set_step(double h);
  /// Sets every affine2 weight and bias to zero (F == 0).
  void zero_branches();

  std::vector<ParameterRef> parameters();
  std::vector<BufferRef> buffers();
  std::size_t parameter_count();

  AffineLayer& embed_layer() { return embed_; }
  AffineLayer& head_layer() { return head_; }
  std::vector<ResidualBlock>& blocks() { return blocks_; }
  const AffineLayer& embed_layer() const { return embed_; }
  const AffineLayer& head_layer() const { return head_; }
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }

 private:
  NetworkConfig config_;
  AffineLayer embed_;
  std::vector<ResidualBlock> blocks_;
  AffineLayer head_;
  std::vector<Matrix> trunk_states_;
  std::vector<Matrix> trunk_grads_;
  bool has_forward_ = false;
};

}  // namespace euler_resnet
