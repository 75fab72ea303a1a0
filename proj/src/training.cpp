#include "euler_resnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace euler_resnet {

LossAndGrad softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  const Eigen::Index m = logits.rows();
  if (static_cast<std::size_t>(m) != labels.size())
    throw DimensionError("softmax_cross_entropy: " + std::to_string(m) +
                         " logit rows but " + std::to_string(labels.size()) + " labels");
  if (m == 0) throw std::invalid_argument("softmax_cross_entropy: empty batch");
  LossAndGrad out;
  out.logit_grad.resize(m, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols())
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
    const double peak = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(i).array() - peak;
    const Eigen::RowVectorXd e = shifted.array().exp();
    const double z = e.sum();
    total += std::log(z) - shifted(y);
    out.logit_grad.row(i) = e / z;
    out.logit_grad(i, y) -= 1.0;
  }
  out.loss = total / static_cast<double>(m);
  out.logit_grad /= static_cast<double>(m);
  return out;
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()), 0);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k)
      if (logits(i, k) > logits(i, best)) best = static_cast<int>(k);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double accuracy(const Matrix& logits, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  const auto pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate >= 0.0))
    throw std::invalid_argument("SgdMomentum: learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("SgdMomentum: momentum must be in [0, 1)");
}

void SgdMomentum::step(Network& net) {
  auto params = net.parameters();
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.value.size(), 0.0);
  }
  if (velocity_.size() != params.size())
    throw std::logic_error("SgdMomentum: parameter layout changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = velocity_[k];
    auto& p = params[k];
    if (v.size() != p.value.size())
      throw std::logic_error("SgdMomentum: velocity shape mismatch for " + p.name);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum_ * v[i] + p.grad[i];
      p.value[i] -= learning_rate_ * v[i];
    }
  }
}

double RunRecord::final_test_acc() const {
  return rows.empty() ? initial.test_acc : rows.back().test_acc;
}

double RunRecord::best_test_acc() const {
  double best = rows.empty() ? initial.test_acc : 0.0;
  for (const auto& r : rows) best = std::max(best, r.test_acc);
  return best;
}

double evaluate(const Network& net, const Dataset& d) {
  return accuracy(net.predict(d.features), d.labels);
}

double evaluate_loss(const Network& net, const Dataset& d) {
  return softmax_cross_entropy(net.predict(d.features), d.labels).loss;
}

namespace {

bool parameters_finite(Network& net) {
  for (const auto& p : net.parameters())
    for (double v : p.value)
      if (!std::isfinite(v)) return false;
  return true;
}

void check_compatible(const Network& net, const Dataset& d, const char* which) {
  const auto& c = net.config();
  if (d.dim() != c.input_dim)
    throw DimensionError(std::string("train: ") + which + " has " +
                         std::to_string(d.dim()) + " features, network expects " +
                         std::to_string(c.input_dim));
  for (int y : d.labels)
    if (y < 0 || y >= c.num_classes)
      throw std::invalid_argument(std::string("train: ") + which +
                                  " has a label outside [0, num_classes)");
}

}  // namespace

RunRecord train(Network& net, const Dataset& train_set, const Dataset& test_set,
                SgdMomentum& opt, const TrainPlan& plan) {
  if (plan.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  const bool use_bn = net.config().use_bn;
  if (plan.batch_size < 1 || (use_bn && plan.batch_size < 2))
    throw std::invalid_argument("train: batch_size must be >= 2 with BN (>= 1 otherwise)");
  check_compatible(net, train_set, "training set");
  check_compatible(net, test_set, "test set");
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");

  RunRecord record;
  record.initial.epoch = 0;
  record.initial.train_loss = evaluate_loss(net, train_set);
  record.initial.train_acc = evaluate(net, train_set);
  record.initial.test_acc = evaluate(net, test_set);

  Rng rng(plan.seed);
  const std::size_t n = train_set.size();
  const auto batch = static_cast<std::size_t>(plan.batch_size);
  EpochRow last = record.initial;

  for (int epoch = 1; epoch <= plan.epochs; ++epoch) {
    if (record.diverged) {
      EpochRow frozen = last;
      frozen.epoch = epoch;
      frozen.diverged = true;
      record.rows.push_back(frozen);
      continue;
    }
    const auto perm = rng.permutation(n);
    double loss_sum = 0.0;
    double input_grad_sum = 0.0;
    double max_block = 0.0;
    std::size_t batches = 0;
    bool blew_up = false;

    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      if (use_bn && stop - start < 2) break;
      const std::vector<std::size_t> rows(perm.begin() + static_cast<long>(start),
                                          perm.begin() + static_cast<long>(stop));
      const Dataset mb = train_set.subset(rows);

      net.zero_grad();
      const Matrix logits = net.forward(mb.features, Mode::train);
      const LossAndGrad lg = softmax_cross_entropy(logits, mb.labels);
      if (!std::isfinite(lg.loss)) {
        blew_up = true;
        break;
      }
      net.backward(lg.logit_grad);
      if (plan.record_gradient_norms) {
        const auto& grads = net.block_input_grads();
        for (const auto& g : grads) max_block = std::max(max_block, frobenius_norm(g));
        input_grad_sum += frobenius_norm(grads.front());
      }
      opt.step(net);
      loss_sum += lg.loss;
      ++batches;
    }
    if (!blew_up && !parameters_finite(net)) blew_up = true;

    if (blew_up) {
      record.diverged = true;
      record.diverged_epoch = epoch;
      EpochRow frozen = last;
      frozen.epoch = epoch;
      frozen.diverged = true;
      record.rows.push_back(frozen);
      continue;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    row.train_acc = evaluate(net, train_set);
    row.test_acc = evaluate(net, test_set);
    row.max_block_grad_norm = max_block;
    row.input_grad_norm = batches ? input_grad_sum / static_cast<double>(batches) : 0.0;
    record.rows.push_back(row);
    last = row;
  }
  return record;
}

}  // namespace euler_resnet
