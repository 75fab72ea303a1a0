#include "euler_resnet/tensor_core.hpp"

namespace euler_resnet {

Matrix gauss_draw(Rng& rng, Eigen::Index rows, Eigen::Index cols, double mean,
                  double std) {
  if (!(std >= 0.0))
    throw std::invalid_argument("gauss_draw: std must be non-negative");
  Matrix out(rows, cols);
  if (std == 0.0) {
    out.setConstant(mean);
    return out;
  }
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = mean + std * rng.normal();
  return out;
}

}  // namespace euler_resnet
