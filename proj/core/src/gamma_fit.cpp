// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "ntd/calibrate.hpp"
#include "ntd/error.hpp"

namespace ntd {

namespace {

constexpr std::size_t kMinFitSamples = 100;
constexpr double kSupportFloor = 1e-6;
constexpr int kMaxIterations = 100;
constexpr double kShapeTolerance = 1e-9;

double log_anchor(std::span<const double> samples) {
  const double hi = *std::max_element(samples.begin(), samples.end());
  return std::max(1.0, hi) + kSupportFloor;
}

}  // namespace

GammaFit fit_gamma_family(std::span<const double> samples, GammaFamily family) {
  if (samples.size() < kMinFitSamples) {
    throw Error(ErrorCode::kInvalidArgument, "gamma fit needs at least " +
                                                 std::to_string(kMinFitSamples) + " samples, got " +
                                                 std::to_string(samples.size()));
  }
  if (!std::all_of(samples.begin(), samples.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::kNonFinite, "gamma fit: non-finite sample");
  }

  GammaFit fit;
  fit.family = family;
  std::vector<double> y(samples.begin(), samples.end());
  if (family == GammaFamily::kLogGamma) {
    fit.anchor = log_anchor(samples);
    for (double& v : y) {
      v = -std::log(fit.anchor - v);
    }
  }

  // Shift only when the transformed sample leaves the gamma support; pinning
  // an already-positive minimum to 1e-6 would distort the MLE.
  const double lo = *std::min_element(y.begin(), y.end());
  fit.shift = lo > 0.0 ? 0.0 : kSupportFloor - lo;
  for (double& v : y) {
    v += fit.shift;
    if (!(v > 0.0)) {
      throw Error(ErrorCode::kNonPositiveSupport, "gamma fit: non-positive value after shift");
    }
  }

  const double count = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / count;
  double var = 0.0;
  double mean_log = 0.0;
  for (double v : y) {
    var += (v - mean) * (v - mean);
    mean_log += std::log(v);
  }
  var /= count;
  mean_log /= count;
  if (std::sqrt(var) <= 1e-12 * std::max(1.0, std::abs(mean))) {
    throw Error(ErrorCode::kDegenerateVariance, "gamma fit: samples have (near) zero variance");
  }

  // Method-of-moments start, then Minka's generalized Newton update on the
  // profile likelihood: 1/k' = 1/k + (E[log y] - log E[y] + log k - psi(k)) / (k^2 (1/k - psi'(k))).
  double shape = mean * mean / var;
  const double log_mean = std::log(mean);
  for (int it = 1; it <= kMaxIterations; ++it) {
    fit.iterations = it;
    const double num = mean_log - log_mean + std::log(shape) - boost::math::digamma(shape);
    const double den = shape * shape * (1.0 / shape - boost::math::trigamma(shape));
    const double next = 1.0 / (1.0 / shape + num / den);
    if (!std::isfinite(next) || next <= 0.0) {
      break;
    }
    const double delta = std::abs(next - shape);
    shape = next;
    if (delta < kShapeTolerance) {
      break;
    }
  }
  fit.shape = shape;
  fit.scale = mean / shape;
  return fit;
}

double GammaFit::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma quantile: p must lie in (0, 1)");
  }
  const boost::math::gamma_distribution<double> dist(shape, scale);
  const double q = boost::math::quantile(dist, p) - shift;
  return family == GammaFamily::kGamma ? q : anchor - std::exp(-q);
}

double GammaFit::cdf(double v) const {
  const boost::math::gamma_distribution<double> dist(shape, scale);
  double y = 0.0;
  if (family == GammaFamily::kGamma) {
    y = v + shift;
  } else {
    if (v >= anchor) return 1.0;
    y = -std::log(anchor - v) + shift;
  }
  return y <= 0.0 ? 0.0 : boost::math::cdf(dist, y);
}

double threshold_by_fit(const SimilaritySamples& samples, const Preset& preset) {
  if (preset.kind == PresetKind::kFrr) {
    return fit_gamma_family(samples.intra, GammaFamily::kLogGamma).quantile(preset.value);
  }
  return fit_gamma_family(samples.inter, GammaFamily::kGamma).quantile(1.0 - preset.value);
}

}  // namespace ntd
