#include "euler_resnet/euler_ivp.hpp"

#include <cmath>
#include <string>

namespace euler_resnet {

NonFiniteStateError::NonFiniteStateError(std::size_t step, Trajectory partial)
    : std::runtime_error("euler_solve: non-finite state at step " +
                         std::to_string(step)),
      step_(step),
      partial_(std::move(partial)) {}

std::size_t euler_step_count(double t_end, double h) {
  const double ratio = t_end / h;
  const double nearest = std::round(ratio);
  if (nearest >= 1.0 && std::abs(ratio - nearest) <= 1e-9 * nearest)
    return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(ratio));
}

Trajectory euler_solve(const IvpProblem& problem, double h) {
  if (!(problem.t_end > 0.0))
    throw std::invalid_argument("euler_solve: t_end must be positive");
  if (!(h > 0.0) || h > problem.t_end)
    throw std::invalid_argument("euler_solve: require 0 < h <= t_end");
  if (!problem.rhs) throw std::invalid_argument("euler_solve: missing rhs");

  const std::size_t steps = euler_step_count(problem.t_end, h);
  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(problem.x0);

  for (std::size_t n = 0; n < steps; ++n) {
    const double t = traj.times.back();
    const double t_next =
        (n + 1 == steps) ? problem.t_end : static_cast<double>(n + 1) * h;
    const Vector& x = traj.states.back();
    const Vector slope = problem.rhs(t, x);
    if (slope.size() != x.size()) {
      throw DimensionError("euler_solve: rhs returned dimension " +
                           std::to_string(slope.size()) + ", expected " +
                           std::to_string(x.size()));
    }
    Vector x_next = x + (t_next - t) * slope;
    if (!all_finite(x_next)) throw NonFiniteStateError(n + 1, std::move(traj));
    traj.times.push_back(t_next);
    traj.states.push_back(std::move(x_next));
  }
  return traj;
}

double max_abs_error(const Trajectory& trajectory, const IvpProblem& problem) {
  if (!problem.analytic)
    throw std::invalid_argument("max_abs_error: problem has no analytic solution");
  double worst = 0.0;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const Vector exact = problem.analytic(trajectory.times[i]);
    worst = std::max(worst, (trajectory.states[i] - exact).norm());
  }
  return worst;
}

IvpProblem linear_decay_problem(double rate, double x0, double t_end) {
  IvpProblem p;
  p.rhs = [rate](double, const Vector& x) -> Vector { return rate * x; };
  p.x0 = Vector::Constant(1, x0);
  p.t_end = t_end;
  p.analytic = [rate, x0](double t) -> Vector {
    return Vector::Constant(1, x0 * std::exp(rate * t));
  };
  return p;
}

}  // namespace euler_resnet
