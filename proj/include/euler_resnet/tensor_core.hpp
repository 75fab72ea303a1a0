#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "euler_resnet/rng.hpp"

namespace euler_resnet {

/// Row-major dense matrix. Batches are stored one sample per row.
template <typename Scalar>
using MatrixT =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

/// Checked matrix product. Throws DimensionError naming both shapes.
template <typename DerivedA, typename DerivedB>
MatrixT<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a) +
                         " and " + shape_string(b));
  }
  MatrixT<typename DerivedA::Scalar> out = a * b;
  return out;
}

/// sqrt of the sum of squared entries, accumulated in row-major order.
template <typename Derived>
typename Derived::Scalar frobenius_norm(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) sum += m(i, j) * m(i, j);
  return std::sqrt(sum);
}

/// Power iteration on m^T m from a fixed pseudo-random start vector.
///
/// Returns sqrt(v_k^T B v_k) with B = m^T m and v_k = B^k v_0 / |B^k v_0|.
/// This is a Rayleigh quotient, so it never exceeds the largest singular
/// value, and by log-convexity of the moments v_0^T B^k v_0 it is
/// nondecreasing in `iters` (up to round-off).
template <typename Derived>
typename Derived::Scalar operator_norm_estimate(
    const Eigen::MatrixBase<Derived>& m, int iters) {
  using Scalar = typename Derived::Scalar;
  if (iters < 1)
    throw std::invalid_argument("operator_norm_estimate: iters must be >= 1");
  if (m.size() == 0) return Scalar(0);
  Rng rng(0x5EEDF00DULL);
  VectorT<Scalar> v(m.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = Scalar(rng.normal());
  v /= v.norm();
  Scalar estimate = 0;
  for (int k = 0; k < iters; ++k) {
    const VectorT<Scalar> mv = m * v;
    estimate = mv.norm();
    VectorT<Scalar> next = m.transpose() * mv;
    const Scalar len = next.norm();
    if (len == Scalar(0) || !std::isfinite(len)) break;
    v = next / len;
  }
  const VectorT<Scalar> mv = m * v;
  return std::max(estimate, Scalar(mv.norm()));
}

/// Largest singular value via a full SVD. Reference for small matrices.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return Scalar(0);
  Eigen::JacobiSVD<MatrixT<Scalar>> svd(m.eval());
  return svd.singularValues()(0);
}

/// rows x cols matrix of i.i.d. N(mean, std^2) draws, filled row-major.
Matrix gauss_draw(Rng& rng, Eigen::Index rows, Eigen::Index cols, double mean,
                  double std);

/// True when every entry is finite.
template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.array().isFinite().all();
}

}  // namespace euler_resnet
