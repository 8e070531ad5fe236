#include "dslam/scale.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dslam/errors.hpp"
#include "dslam/robust.hpp"

namespace dslam {

namespace {

double plain_median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lo + hi);
}

}  // namespace

ScaleProblem gate_samples(const ScaleProblem& problem) {
  ScaleProblem out;
  out.t_sigma = problem.t_sigma;
  out.min_samples = problem.min_samples;
  for (const ScaleSample& s : problem.samples) {
    if (!(s.rel_std <= problem.t_sigma)) continue;
    if (!(std::isfinite(s.d) && s.d > 0.0 && std::isfinite(s.d_hat) && s.d_hat > 0.0)) continue;
    if (!(s.confidence >= 0.0) || !std::isfinite(s.confidence)) continue;
    out.samples.push_back(s);
  }
  if (out.samples.size() < problem.min_samples) throw InsufficientSamplesError(out.samples.size());
  return out;
}

double init_scale_weighted_median(const ScaleProblem& problem) {
  if (problem.samples.empty()) throw InsufficientSamplesError(0);
  std::vector<std::pair<double, double>> rc;
  rc.reserve(problem.samples.size());
  double total = 0.0;
  for (const ScaleSample& s : problem.samples) {
    rc.emplace_back(s.d / s.d_hat, s.confidence);
    total += s.confidence;
  }
  std::sort(rc.begin(), rc.end());
  if (!(total > 0.0)) {
    for (auto& p : rc) p.second = 1.0;
    total = static_cast<double>(rc.size());
  }
  double cum = 0.0;
  for (const auto& [ratio, c] : rc) {
    cum += c;
    if (cum / total >= 0.5) return ratio;
  }
  return rc.back().first;
}

ScaleEstimate estimate_scale_irls(const ScaleProblem& problem, double init) {
  if (problem.samples.empty()) throw InsufficientSamplesError(0);
  if (!(init > 0.0) || !std::isfinite(init)) throw EstimateFailedError("invalid initial scale");
  const auto& samples = problem.samples;
  ScaleEstimate est;
  double s = init;
  std::vector<double> r(samples.size());
  for (int it = 0; it < 100; ++it) {
    for (std::size_t k = 0; k < samples.size(); ++k) r[k] = samples[k].d - s * samples[k].d_hat;
    const double med = plain_median(r);
    std::vector<double> dev(r.size());
    for (std::size_t k = 0; k < r.size(); ++k) dev[k] = std::abs(r[k] - med);
    const double delta = std::max(1.345 * plain_median(dev), 1e-12);
    est.huber_delta = delta;

    double num = 0.0;
    double den = 0.0;
    int inliers = 0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const double w = huber_weight(r[k], delta) * samples[k].confidence;
      if (std::abs(r[k]) <= delta) ++inliers;
      num += w * samples[k].d * samples[k].d_hat;
      den += w * samples[k].d_hat * samples[k].d_hat;
    }
    est.inlier_count = inliers;
    est.iterations = it + 1;
    if (!(den > 0.0)) throw EstimateFailedError("scale system has no weight");
    const double next = num / den;
    if (!std::isfinite(next) || !(next > 0.0)) throw EstimateFailedError("non-positive scale");
    const double step = std::abs(next - s) / next;
    s = next;
    if (step < 1e-10) {
      est.converged = true;
      break;
    }
  }
  est.s_star = s;
  return est;
}

double scale_objective(const ScaleProblem& problem, double s, double huber_delta) {
  double total = 0.0;
  for (const ScaleSample& x : problem.samples) {
    total += x.confidence * huber_cost(x.d - s * x.d_hat, huber_delta);
  }
  return total;
}

PriorFrameData apply_scale(const PriorFrameData& prior, double s_star) {
  if (!(s_star > 0.0) || !std::isfinite(s_star)) throw DomainError("scale must be positive");
  PriorFrameData out = prior;
  out.applied_scale *= s_star;
  return out;
}

}  // namespace dslam
