#include "dslam/robust.hpp"

#include <cmath>

namespace dslam {

double huber_cost(double residual, double delta) {
  const double e = std::abs(residual);
  if (e <= delta) return e * e;
  return 2.0 * delta * e - delta * delta;
}

double huber_weight(double residual, double delta) {
  const double e = std::abs(residual);
  if (e <= delta) return 1.0;
  return delta / e;
}

}  // namespace dslam
