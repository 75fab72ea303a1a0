#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "euler_resnet/data.hpp"
#include "euler_resnet/network.hpp"

namespace euler_resnet {

struct LossAndGrad {
  double loss = 0.0;
  Matrix logit_grad;
};

/// Mean softmax cross-entropy over the batch (log-sum-exp stabilized).
/// Gradient is (softmax - onehot) / batch_size.
LossAndGrad softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels);

/// Row-wise argmax; ties resolve to the lowest class index.
std::vector<int> argmax_rows(const Matrix& logits);
double accuracy(const Matrix& logits, const std::vector<int>& labels);

/// v <- momentum v + g;  p <- p - learning_rate v
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum);

  void step(Network& net);
  double learning_rate() const { return learning_rate_; }
  double momentum() const { return momentum_; }

 private:
  double learning_rate_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

struct TrainPlan {
  int epochs = 200;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool record_gradient_norms = true;
  bool record_trajectories = false;

  bool operator==(const TrainPlan&) const = default;
};

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  /// Largest |dL/dx_n|_F over blocks and over the epoch's mini-batches.
  double max_block_grad_norm = 0.0;
  /// Mean over the epoch's mini-batches of |dL/dx_0|_F.
  double input_grad_norm = 0.0;
  /// Row holds metrics frozen at the last finite epoch.
  bool diverged = false;

  bool operator==(const EpochRow&) const = default;
};

struct RunRecord {
  /// Metrics of the untrained network (epoch 0); not one of `rows`.
  EpochRow initial;
  std::vector<EpochRow> rows;
  bool diverged = false;
  /// First epoch (1-based) in which a non-finite loss or parameter appeared.
  std::optional<int> diverged_epoch;

  double final_test_acc() const;
  double best_test_acc() const;
  bool operator==(const RunRecord&) const = default;
};

/// Eval-mode accuracy of `net` on `d`.
double evaluate(const Network& net, const Dataset& d);
/// Eval-mode mean cross-entropy on `d`.
double evaluate_loss(const Network& net, const Dataset& d);

/// Mini-batch training. Mini-batches follow Rng(plan.seed) permutations,
/// one per epoch; a trailing batch smaller than 2 is dropped when BN is on.
/// A non-finite loss or parameter ends training and the remaining rows repeat
/// the last finite metrics with `diverged` set.
RunRecord train(Network& net, const Dataset& train_set, const Dataset& test_set,
                SgdMomentum& opt, const TrainPlan& plan);

}  // namespace euler_resnet
