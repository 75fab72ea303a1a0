#include "euler_resnet/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "euler_resnet/csv.hpp"
#include "euler_resnet/training.hpp"

namespace euler_resnet {

GradientProfile gradient_profile(Network& net, const Matrix& batch,
                                 const std::vector<int>& labels, Mode mode) {
  net.zero_grad();
  const Matrix logits = net.forward(batch, mode);
  const LossAndGrad lg = softmax_cross_entropy(logits, labels);
  net.backward(lg.logit_grad);
  const auto& grads = net.block_input_grads();

  GradientProfile profile;
  profile.per_sample.resize(batch.rows(), static_cast<Eigen::Index>(grads.size()));
  for (std::size_t n = 0; n < grads.size(); ++n) {
    const double norm = frobenius_norm(grads[n]);
    profile.norms.push_back(norm);
    profile.per_sample.col(static_cast<Eigen::Index>(n)) = grads[n].rowwise().norm();
    if (!std::isfinite(norm) && !profile.exploded) {
      profile.exploded = true;
      profile.first_nonfinite = n;
    }
  }
  return profile;
}

double LipschitzCertificate::max_bound() const {
  double w = 0.0;
  for (double b : block_bounds) w = std::max(w, b);
  return w;
}

LipschitzCertificate jacobian_certificate(const Network& net, const Matrix& batch) {
  const TrunkTrace trace = net.trace_trunk(net.embed(batch));
  LipschitzCertificate cert;
  cert.exact = net.width() <= kExactJacobianMaxWidth;
  const auto& blocks = net.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    double w = 0.0;
    const Matrix& x = trace.states[i];
    for (Eigen::Index s = 0; s < x.rows(); ++s) {
      const Matrix J = blocks[i].branch_jacobian(x.row(s));
      const double norm = cert.exact
                              ? spectral_norm(J)
                              : kPowerIterationSafety * operator_norm_estimate(J, kPowerIterations);
      w = std::max(w, norm);
    }
    cert.block_bounds.push_back(w);
  }
  return cert;
}

double proposition1_bound(double h, double W, int depth) {
  return 1.0 - h + h * std::pow(1.0 + W, depth);
}

Proposition1Report proposition1_check(Network& net, const Matrix& batch,
                                      const std::vector<int>& labels,
                                      const LipschitzCertificate& cert) {
  if (cert.block_bounds.size() != static_cast<std::size_t>(net.depth()))
    throw std::invalid_argument("proposition1_check: certificate depth mismatch");
  const GradientProfile profile = gradient_profile(net, batch, labels, Mode::eval);

  Proposition1Report report;
  report.h = net.config().h;
  report.depth = net.depth();
  report.W = cert.max_bound();
  report.bound = proposition1_bound(report.h, report.W, report.depth);

  const Eigen::Index last = profile.per_sample.cols() - 1;
  bool any = false;
  for (Eigen::Index s = 0; s < profile.per_sample.rows(); ++s) {
    const double out = profile.per_sample(s, last);
    if (out == 0.0) continue;
    any = true;
    report.measured_ratio = std::max(report.measured_ratio, profile.per_sample(s, 0) / out);
  }
  report.degenerate = !any;
  report.slack = report.bound - report.measured_ratio;
  report.holds = !report.degenerate && std::isfinite(report.measured_ratio) &&
                 report.measured_ratio <= report.bound + 1e-9;
  return report;
}

NoiseProfile noise_profile(const Network& net, const Matrix& x0,
                           const Matrix& perturbation) {
  if (x0.rows() != perturbation.rows() || x0.cols() != perturbation.cols())
    throw DimensionError("noise_profile: perturbation " + shape_string(perturbation) +
                         " does not match input " + shape_string(x0));
  const TrunkTrace clean = net.trace_trunk(x0);
  const TrunkTrace noisy = net.trace_trunk(x0 + perturbation);
  const auto depth = static_cast<Eigen::Index>(clean.branches.size());

  NoiseProfile p;
  p.per_sample_epsilon.resize(x0.rows(), depth + 1);
  p.per_sample_branch_delta.resize(x0.rows(), depth);
  for (Eigen::Index n = 0; n <= depth; ++n) {
    const Matrix diff = noisy.states[static_cast<std::size_t>(n)] -
                        clean.states[static_cast<std::size_t>(n)];
    p.epsilon.push_back(n == 0 ? frobenius_norm(perturbation) : frobenius_norm(diff));
    p.per_sample_epsilon.col(n) =
        n == 0 ? Vector(perturbation.rowwise().norm()) : Vector(diff.rowwise().norm());
  }
  for (Eigen::Index i = 0; i < depth; ++i) {
    const Matrix diff = noisy.branches[static_cast<std::size_t>(i)] -
                        clean.branches[static_cast<std::size_t>(i)];
    p.branch_delta.push_back(frobenius_norm(diff));
    p.per_sample_branch_delta.col(i) = diff.rowwise().norm();
  }
  return p;
}

double eq10_min_slack(const NoiseProfile& profile, double h, double tol) {
  double min_slack = std::numeric_limits<double>::infinity();
  const Eigen::Index depth = profile.per_sample_branch_delta.cols();
  for (Eigen::Index s = 0; s < profile.per_sample_epsilon.rows(); ++s) {
    const double eps0 = profile.per_sample_epsilon(s, 0);
    double accumulated = 0.0;
    for (Eigen::Index n = 1; n <= depth; ++n) {
      accumulated += profile.per_sample_branch_delta(s, n - 1);
      const double bound = eps0 + h * accumulated + tol;
      min_slack = std::min(min_slack, bound - profile.per_sample_epsilon(s, n));
    }
  }
  return min_slack;
}

LipschitzCertificate branch_deviation_certificate(const NoiseProfile& profile) {
  LipschitzCertificate cert;
  for (Eigen::Index i = 0; i < profile.per_sample_branch_delta.cols(); ++i)
    cert.block_bounds.push_back(profile.per_sample_branch_delta.col(i).maxCoeff());
  return cert;
}

Proposition2Report proposition2_check(const NoiseProfile& profile,
                                      const LipschitzCertificate& cert, double h,
                                      int depth) {
  Proposition2Report report;
  report.W = cert.max_bound();
  report.slack = std::numeric_limits<double>::infinity();
  const Eigen::Index last = profile.per_sample_epsilon.cols() - 1;
  for (Eigen::Index s = 0; s < profile.per_sample_epsilon.rows(); ++s) {
    const double eps0 = profile.per_sample_epsilon(s, 0);
    const double epsD = profile.per_sample_epsilon(s, last);
    const double bound = eps0 + h * depth * report.W;
    if (bound - epsD < report.slack) {
      report.slack = bound - epsD;
      report.epsilon0 = eps0;
      report.epsilonD = epsD;
      report.bound = bound;
    }
  }
  report.holds = report.slack >= -1e-9;
  return report;
}

std::vector<Snapshot> trajectory_export(const Network& net, const Dataset& d,
                                        const std::vector<int>& block_indices) {
  for (int b : block_indices)
    if (b < 0 || b > net.depth())
      throw std::out_of_range("trajectory_export: block " + std::to_string(b) +
                              " outside [0, " + std::to_string(net.depth()) + "]");
  const TrunkTrace trace = net.trace_trunk(net.embed(d.features));
  std::vector<Snapshot> out;
  for (int b : block_indices)
    out.push_back({b, trace.states[static_cast<std::size_t>(b)], d.labels});
  return out;
}

void write_snapshots_csv(const std::vector<Snapshot>& snaps,
                         const std::filesystem::path& path) {
  const Eigen::Index width = snaps.empty() ? 0 : snaps.front().features.cols();
  std::vector<std::string> header{"block"};
  for (Eigen::Index j = 0; j < width; ++j) header.push_back("x" + std::to_string(j));
  header.emplace_back("label");
  CsvWriter w(path, header);
  for (const auto& snap : snaps) {
    for (Eigen::Index i = 0; i < snap.features.rows(); ++i) {
      w.field(snap.block);
      for (Eigen::Index j = 0; j < width; ++j) w.field(snap.features(i, j));
      w.field(snap.labels[static_cast<std::size_t>(i)]);
      w.end_row();
    }
  }
}

namespace {

double relative_error(double analytic, double fd) {
  return std::abs(analytic - fd) / (std::abs(analytic) + std::abs(fd) + 1e-8);
}

double loss_of(Network& net, const Matrix& batch, const std::vector<int>& labels,
               Mode mode) {
  return softmax_cross_entropy(net.forward(batch, mode), labels).loss;
}

}  // namespace

double finite_difference_oracle(const Network& net, const Matrix& batch,
                                const std::vector<int>& labels,
                                const FiniteDifferenceOptions& options) {
  if (!(options.delta > 0.0))
    throw std::invalid_argument("finite_difference_oracle: delta must be > 0");
  Network analytic_net = net;
  analytic_net.zero_grad();
  const LossAndGrad lg =
      softmax_cross_entropy(analytic_net.forward(batch, options.mode), labels);
  analytic_net.backward(lg.logit_grad);

  std::vector<std::pair<std::size_t, std::size_t>> entries;
  const auto analytic_params = analytic_net.parameters();
  for (std::size_t k = 0; k < analytic_params.size(); ++k) {
    if (analytic_params[k].name.find(options.name_contains) == std::string::npos) continue;
    for (std::size_t i = 0; i < analytic_params[k].value.size(); ++i)
      entries.emplace_back(k, i);
  }

  Rng rng(options.seed);
  const std::size_t take =
      std::min<std::size_t>(entries.size(), static_cast<std::size_t>(options.samples));
  const auto perm = rng.permutation(entries.size());

  Network probe = net;
  double worst = 0.0;
  for (std::size_t t = 0; t < take; ++t) {
    const auto [k, i] = entries[perm[t]];
    double& value = probe.parameters()[k].value[i];
    const double original = value;
    value = original + options.delta;
    const double plus = loss_of(probe, batch, labels, options.mode);
    value = original - options.delta;
    const double minus = loss_of(probe, batch, labels, options.mode);
    value = original;
    const double fd = (plus - minus) / (2.0 * options.delta);
    worst = std::max(worst, relative_error(analytic_params[k].grad[i], fd));
  }
  return worst;
}

double input_gradient_fd_error(const Network& net, const Matrix& batch,
                               const std::vector<int>& labels, double delta, Mode mode) {
  Network work = net;
  work.zero_grad();
  const LossAndGrad lg = softmax_cross_entropy(work.forward(batch, mode), labels);
  const Matrix analytic = work.backward(lg.logit_grad);

  Matrix probe = batch;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    for (Eigen::Index j = 0; j < batch.cols(); ++j) {
      const double original = probe(i, j);
      probe(i, j) = original + delta;
      const double plus = loss_of(work, probe, labels, mode);
      probe(i, j) = original - delta;
      const double minus = loss_of(work, probe, labels, mode);
      probe(i, j) = original;
      worst = std::max(worst, relative_error(analytic(i, j), (plus - minus) / (2 * delta)));
    }
  }
  return worst;
}

}  // namespace euler_resnet
