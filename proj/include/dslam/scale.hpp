#pragma once

#include <vector>

#include "dslam/provider.hpp"

namespace dslam {

/// One patch of a historical keyframe seen by the new prior batch.
struct ScaleSample {
  double d = 0.0;        // inverse depth from the BA state (system scale)
  double d_hat = 0.0;    // prior inverse depth at the patch center
  double confidence = 0.0;
  double rel_std = 0.0;  // sigma_z^rel of the patch
};

struct ScaleProblem {
  std::vector<ScaleSample> samples;
  double t_sigma = 0.5;
  std::size_t min_samples = 10;
};

struct ScaleEstimate {
  double s_star = 1.0;
  int inlier_count = 0;
  int iterations = 0;
  bool converged = false;
  /// Huber threshold of the final iteration.
  double huber_delta = 0.0;
};

/// Keeps samples with rel_std <= t_sigma, positive finite depths and
/// non-negative confidence. Throws InsufficientSamplesError when fewer than
/// min_samples remain.
ScaleProblem gate_samples(const ScaleProblem& problem);

/// Confidence-weighted median of d / d_hat: the first ratio (ascending) at
/// which the normalized cumulative confidence reaches 0.5. Falls back to the
/// unweighted median when all confidences are zero.
double init_scale_weighted_median(const ScaleProblem& problem);

/// Minimizes sum c * huber(d - s * d_hat) over s by IRLS. The Huber threshold
/// is 1.345 * MAD of the current residuals (floored at 1e-12), refreshed
/// every iteration. Throws EstimateFailedError on a non-positive or
/// non-finite iterate.
ScaleEstimate estimate_scale_irls(const ScaleProblem& problem, double init);

/// sum c * huber(d - s * d_hat) with a fixed threshold.
double scale_objective(const ScaleProblem& problem, double s, double huber_delta);

/// Returns the prior with its inverse-depth scale multiplied by s_star, so
/// aligned depths become depth / s_star. Throws DomainError unless s_star > 0.
PriorFrameData apply_scale(const PriorFrameData& prior, double s_star);

}  // namespace dslam
