#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "euler_resnet/tensor_core.hpp"

namespace euler_resnet {

/// x' = rhs(t, x), x(0) = x0 on [0, t_end].
struct IvpProblem {
  std::function<Vector(double, const Vector&)> rhs;
  Vector x0;
  double t_end = 1.0;
  /// Closed-form solution, if known. Empty when unavailable.
  std::function<Vector(double)> analytic;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;

  std::size_t size() const { return times.size(); }
};

/// Raised when an explicit step produces NaN/Inf. Unstable step sizes are
/// expected to end up here; `step()` is the index of the offending state.
class NonFiniteStateError : public std::runtime_error {
 public:
  NonFiniteStateError(std::size_t step, Trajectory partial);
  std::size_t step() const { return step_; }
  const Trajectory& partial() const { return partial_; }

 private:
  std::size_t step_;
  Trajectory partial_;
};

/// Number of explicit steps needed to cover [0, t_end] with step h. A
/// ratio within 1e-9 of an integer counts as that integer.
std::size_t euler_step_count(double t_end, double h);

/// Explicit Euler: x_{n+1} = x_n + dt_n rhs(t_n, x_n) with t_n = n h and the
/// final step truncated so the last time is exactly t_end.
Trajectory euler_solve(const IvpProblem& problem, double h);

/// Max over trajectory points of |x_n - x(t_n)|_2. Requires `analytic`.
double max_abs_error(const Trajectory& trajectory, const IvpProblem& problem);

/// x' = rate x, x(0) = x0, with analytic solution x0 exp(rate t).
IvpProblem linear_decay_problem(double rate = -2.3, double x0 = 1.0,
                                double t_end = 3.0);

}  // namespace euler_resnet
