#include "euler_resnet/layers.hpp"

#include <stdexcept>

namespace euler_resnet {

namespace {

std::span<double> span_of(Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<double> span_of(Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

}  // namespace

// AffineLayer ---------------------------------------------------------------

AffineLayer::AffineLayer(Eigen::Index in_dim, Eigen::Index out_dim)
    : weight(Matrix::Zero(out_dim, in_dim)),
      bias(Vector::Zero(out_dim)),
      grad_weight(Matrix::Zero(out_dim, in_dim)),
      grad_bias(Vector::Zero(out_dim)) {}

Matrix AffineLayer::apply(const Matrix& x) const {
  if (x.cols() != in_dim()) {
    throw DimensionError("AffineLayer: input " + shape_string(x) +
                         " does not match weight " + shape_string(weight));
  }
  Matrix y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

Matrix AffineLayer::forward(const Matrix& x) {
  Matrix y = apply(x);
  cached_input_ = x;
  return y;
}

Matrix AffineLayer::backward(const Matrix& grad_out) {
  if (!cached_input_)
    throw std::logic_error("AffineLayer::backward called without forward");
  grad_weight.noalias() += grad_out.transpose() * *cached_input_;
  grad_bias += grad_out.colwise().sum().transpose();
  return grad_out * weight;
}

void AffineLayer::zero_grad() {
  grad_weight.setZero();
  grad_bias.setZero();
}

void AffineLayer::append_parameters(const std::string& prefix,
                                    std::vector<ParameterRef>& out, bool with_bias) {
  out.push_back({prefix + ".weight", span_of(weight), span_of(grad_weight)});
  if (with_bias) out.push_back({prefix + ".bias", span_of(bias), span_of(grad_bias)});
}

// BatchNormState ------------------------------------------------------------

BatchNormState::BatchNormState(Eigen::Index features, double eps_,
                               double momentum_)
    : gamma(Vector::Ones(features)),
      beta(Vector::Zero(features)),
      running_mean(Vector::Zero(features)),
      running_var(Vector::Ones(features)),
      grad_gamma(Vector::Zero(features)),
      grad_beta(Vector::Zero(features)),
      eps(eps_),
      momentum(momentum_) {
  if (!(eps > 0.0)) throw std::invalid_argument("BatchNormState: eps must be > 0");
}

Vector BatchNormState::eval_scale() const {
  return gamma.array() / (running_var.array() + eps).sqrt();
}

Matrix BatchNormState::apply(const Matrix& x) const {
  if (x.cols() != features())
    throw DimensionError("BatchNorm: input " + shape_string(x) + " has wrong width");
  const Vector scale = eval_scale();
  Matrix y = (x.rowwise() - running_mean.transpose()).array().rowwise() *
             scale.transpose().array();
  y.rowwise() += beta.transpose();
  return y;
}

Matrix BatchNormState::forward(const Matrix& x, Mode mode) {
  if (x.cols() != features())
    throw DimensionError("BatchNorm: input " + shape_string(x) + " has wrong width");
  if (mode == Mode::eval) {
    const Vector inv_std = (running_var.array() + eps).rsqrt();
    Matrix normalized = (x.rowwise() - running_mean.transpose()).array().rowwise() *
                        inv_std.transpose().array();
    Matrix y = normalized.array().rowwise() * gamma.transpose().array();
    y.rowwise() += beta.transpose();
    cache_ = Cache{mode, std::move(normalized), inv_std};
    return y;
  }

  const Eigen::Index m = x.rows();
  if (m < 2)
    throw std::invalid_argument("BatchNorm: train mode needs a batch of at least 2");
  const Vector mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - mean.transpose();
  const Vector var =
      centered.array().square().colwise().sum().transpose() / static_cast<double>(m);
  const Vector inv_std = (var.array() + eps).rsqrt();
  Matrix normalized = centered.array().rowwise() * inv_std.transpose().array();
  Matrix y = normalized.array().rowwise() * gamma.transpose().array();
  y.rowwise() += beta.transpose();

  running_mean = (1.0 - momentum) * running_mean + momentum * mean;
  running_var = (1.0 - momentum) * running_var + momentum * var;
  cache_ = Cache{mode, std::move(normalized), inv_std};
  return y;
}

Matrix BatchNormState::backward(const Matrix& grad_out) {
  if (!cache_)
    throw std::logic_error("BatchNormState::backward called without forward");
  const Matrix& xhat = cache_->normalized;
  grad_gamma += (grad_out.array() * xhat.array()).colwise().sum().transpose().matrix();
  grad_beta += grad_out.colwise().sum().transpose();

  const Matrix dxhat = grad_out.array().rowwise() * gamma.transpose().array();
  if (cache_->mode == Mode::eval) {
    return dxhat.array().rowwise() * cache_->inv_std.transpose().array();
  }
  // dx = inv_std / m * (m dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
  const double m = static_cast<double>(grad_out.rows());
  const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
  const Eigen::RowVectorXd sum_dxhat_xhat =
      (dxhat.array() * xhat.array()).colwise().sum();
  Matrix dx = (m * dxhat.array()).matrix();
  dx.rowwise() -= sum_dxhat;
  dx -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  dx = dx.array().rowwise() * (cache_->inv_std.transpose().array() / m);
  return dx;
}

void BatchNormState::zero_grad() {
  grad_gamma.setZero();
  grad_beta.setZero();
}

void BatchNormState::append_parameters(const std::string& prefix,
                                       std::vector<ParameterRef>& out) {
  out.push_back({prefix + ".gamma", span_of(gamma), span_of(grad_gamma)});
  out.push_back({prefix + ".beta", span_of(beta), span_of(grad_beta)});
}

void BatchNormState::append_buffers(const std::string& prefix,
                                    std::vector<BufferRef>& out) {
  out.push_back({prefix + ".running_mean", span_of(running_mean)});
  out.push_back({prefix + ".running_var", span_of(running_var)});
}

// ResidualBlock -------------------------------------------------------------

ResidualBlock::ResidualBlock(Eigen::Index width, double h_, bool use_bn,
                             Activation activation_)
    : h(h_), activation(activation_), affine1(width, width), affine2(width, width) {
  if (width < 1) throw std::invalid_argument("ResidualBlock: width must be >= 1");
  if (!(h > 0.0)) throw std::invalid_argument("ResidualBlock: h must be > 0");
  if (use_bn) bn.emplace(width);
}

Matrix ResidualBlock::forward(const Matrix& x, Mode mode) {
  if (x.cols() != width()) {
    throw DimensionError("ResidualBlock: input " + shape_string(x) +
                         " does not match width " + std::to_string(width()));
  }
  Matrix z = affine1.forward(x);
  if (bn) z = bn->forward(z, mode);
  Matrix a = activation == Activation::relu ? relu(z) : z;
  pre_activation_ = std::move(z);
  branch_ = affine2.forward(a);
  return x + h * *branch_;
}

Matrix ResidualBlock::branch(const Matrix& x) const {
  if (x.cols() != width()) {
    throw DimensionError("ResidualBlock: input " + shape_string(x) +
                         " does not match width " + std::to_string(width()));
  }
  Matrix z = affine1.apply(x);
  if (bn) z = bn->apply(z);
  if (activation == Activation::relu) z = relu(z);
  return affine2.apply(z);
}

Matrix ResidualBlock::branch_jacobian(
    const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  Matrix row = x;
  Matrix z = affine1.apply(row);
  Vector scale = Vector::Ones(width());
  if (bn) {
    scale = bn->eval_scale();
    z = bn->apply(z);
  }
  if (activation == Activation::relu) {
    for (Eigen::Index k = 0; k < scale.size(); ++k)
      if (!(z(0, k) > 0.0)) scale(k) = 0.0;
  }
  return affine2.weight * scale.asDiagonal() * affine1.weight;
}

Matrix ResidualBlock::backward(const Matrix& grad_out) {
  if (!pre_activation_)
    throw std::logic_error("ResidualBlock::backward called without forward");
  Matrix g = affine2.backward(h * grad_out);
  if (activation == Activation::relu)
    g = (pre_activation_->array() > 0.0).select(g, 0.0);
  if (bn) g = bn->backward(g);
  g = affine1.backward(g);
  return grad_out + g;
}

void ResidualBlock::zero_grad() {
  affine1.zero_grad();
  affine2.zero_grad();
  if (bn) bn->zero_grad();
}

const Matrix& ResidualBlock::last_branch() const {
  if (!branch_) throw std::logic_error("ResidualBlock: no forward pass cached");
  return *branch_;
}

void ResidualBlock::append_parameters(const std::string& prefix,
                                      std::vector<ParameterRef>& out) {
  affine1.append_parameters(prefix + ".affine1", out, !bn);
  if (bn) bn->append_parameters(prefix + ".bn", out);
  affine2.append_parameters(prefix + ".affine2", out);
}

void ResidualBlock::append_buffers(const std::string& prefix,
                                   std::vector<BufferRef>& out) {
  if (bn) bn->append_buffers(prefix + ".bn", out);
}

}  // namespace euler_resnet
