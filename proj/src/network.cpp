#include "euler_resnet/network.hpp"

#include <cmath>
#include <stdexcept>

namespace euler_resnet {

void NetworkConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("network: depth must be >= 1");
  if (width < 1) throw std::invalid_argument("network: width must be >= 1");
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("network: h must be > 0");
  if (num_classes < 2) throw std::invalid_argument("network: num_classes must be >= 2");
  if (input_dim < 1) throw std::invalid_argument("network: input_dim must be >= 1");
  if (!(init_gain >= 0.0)) throw std::invalid_argument("network: init_gain must be >= 0");
}

std::string to_string(InitRule rule) {
  return rule == InitRule::zero_branch ? "zero_branch" : "gaussian_fan_in";
}

std::string to_string(Activation activation) {
  return activation == Activation::identity ? "identity" : "relu";
}

InitRule init_rule_from_string(const std::string& s) {
  if (s == "gaussian_fan_in") return InitRule::gaussian_fan_in;
  if (s == "zero_branch") return InitRule::zero_branch;
  throw std::invalid_argument("unknown init rule '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

namespace {
void init_gaussian(AffineLayer& layer, Rng& rng, double gain) {
  const double std = gain / std::sqrt(static_cast<double>(layer.in_dim()));
  layer.weight = gauss_draw(rng, layer.out_dim(), layer.in_dim(), 0.0, std);
  layer.bias.setZero();
}
}  // namespace

Network::Network(const NetworkConfig& config)
    : config_(config),
      embed_(config.input_dim, config.width),
      head_(config.width, config.num_classes) {
  if (config.depth < 0 || config.width < 1 || config.input_dim < 1 ||
      config.num_classes < 1) {
    throw std::invalid_argument("Network: invalid dimensions");
  }
  if (!(config.h > 0.0)) throw std::invalid_argument("Network: h must be > 0");
  blocks_.reserve(static_cast<std::size_t>(config.depth));
  for (int i = 0; i < config.depth; ++i)
    blocks_.emplace_back(config.width, config.h, config.use_bn, config.activation);

  Rng rng(config.seed);
  init_gaussian(embed_, rng, config.init_gain);
  for (auto& block : blocks_) {
    init_gaussian(block.affine1, rng, config.init_gain);
    init_gaussian(block.affine2, rng, config.init_gain);
  }
  init_gaussian(head_, rng, config.init_gain);
  if (config.init_rule == InitRule::zero_branch) zero_branches();
}

Matrix Network::forward(const Matrix& x, Mode mode) {
  if (x.cols() != config_.input_dim) {
    throw DimensionError("Network: input " + shape_string(x) + " but input_dim is " +
                         std::to_string(config_.input_dim));
  }
  trunk_states_.clear();
  trunk_states_.reserve(blocks_.size() + 1);
  trunk_states_.push_back(embed_.forward(x));
  for (auto& block : blocks_)
    trunk_states_.push_back(block.forward(trunk_states_.back(), mode));
  has_forward_ = true;
  return head_.forward(trunk_states_.back());
}

Matrix Network::backward(const Matrix& logit_grad) {
  if (!has_forward_) throw std::logic_error("Network::backward called without forward");
  if (logit_grad.rows() != trunk_states_.back().rows() ||
      logit_grad.cols() != head_.out_dim()) {
    throw DimensionError("Network::backward: logit gradient " +
                         shape_string(logit_grad) + " does not match the cached batch");
  }
  trunk_grads_.assign(blocks_.size() + 1, Matrix());
  Matrix g = head_.backward(logit_grad);
  trunk_grads_.back() = g;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    g = blocks_[i].backward(g);
    trunk_grads_[i] = g;
  }
  return embed_.backward(g);
}

void Network::zero_grad() {
  embed_.zero_grad();
  for (auto& block : blocks_) block.zero_grad();
  head_.zero_grad();
}

Matrix Network::embed(const Matrix& x) const {
  if (x.cols() != config_.input_dim) {
    throw DimensionError("Network: input " + shape_string(x) + " but input_dim is " +
                         std::to_string(config_.input_dim));
  }
  return embed_.apply(x);
}

TrunkTrace Network::trace_trunk(const Matrix& x0) const {
  TrunkTrace trace;
  trace.states.reserve(blocks_.size() + 1);
  trace.branches.reserve(blocks_.size());
  trace.states.push_back(x0);
  for (const auto& block : blocks_) {
    trace.branches.push_back(block.branch(trace.states.back()));
    trace.states.push_back(trace.states.back() + block.h * trace.branches.back());
  }
  return trace;
}

Matrix Network::head_logits(const Matrix& trunk_out) const {
  return head_.apply(trunk_out);
}

Matrix Network::predict(const Matrix& x) const {
  Matrix state = embed(x);
  for (const auto& block : blocks_) state = state + block.h * block.branch(state);
  return head_.apply(state);
}

void Network::set_step(double h) {
  if (!(h > 0.0)) throw std::invalid_argument("Network::set_step: h must be > 0");
  config_.h = h;
  for (auto& block : blocks_) block.h = h;
}

void Network::zero_branches() {
  for (auto& block : blocks_) {
    block.affine2.weight.setZero();
    block.affine2.bias.setZero();
  }
}

std::vector<ParameterRef> Network::parameters() {
  std::vector<ParameterRef> out;
  embed_.append_parameters("embed", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].append_parameters("block" + std::to_string(i), out);
  head_.append_parameters("head", out);
  return out;
}

std::vector<BufferRef> Network::buffers() {
  std::vector<BufferRef> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].append_buffers("block" + std::to_string(i), out);
  return out;
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value.size();
  return n;
}

}  // namespace euler_resnet
