#pragma once

namespace dslam {

/// Huber penalty on a residual magnitude: e^2 inside delta, 2 delta e - delta^2 outside.
double huber_cost(double residual, double delta);

/// IRLS weight min(1, delta / |e|) matching huber_cost.
double huber_weight(double residual, double delta);

}  // namespace dslam
