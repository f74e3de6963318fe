// SPDX-License-Identifier: Apache-2.0
#include "ntd/simdist.hpp"

#include <algorithm>
#include <cmath>

#include "ntd/error.hpp"

namespace ntd {

namespace {

thread_local std::uint64_t g_evaluations = 0;

void check_lengths(std::span<const float> a, std::span<const float> b, const char* who) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kLengthMismatch, std::string(who) + ": operand lengths differ (" +
                                                std::to_string(a.size()) + " vs " +
                                                std::to_string(b.size()) + ")");
  }
  if (a.empty()) {
    throw Error(ErrorCode::kEmptyInput, std::string(who) + ": empty operands");
  }
}

struct Dots {
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
};

Dots dots(std::span<const float> a, std::span<const float> b) {
  Dots d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    d.ab += x * y;
    d.aa += x * x;
    d.bb += y * y;
  }
  return d;
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

std::string_view metric_name(Metric m) noexcept {
  switch (m) {
    case Metric::kCosine: return "cosine";
    case Metric::kPearson: return "pearson";
    case Metric::kTanimotoRootNorm: return "tanimoto-rootnorm";
    case Metric::kTanimotoStandard: return "tanimoto-standard";
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  if (name == "cosine") return Metric::kCosine;
  if (name == "pearson") return Metric::kPearson;
  if (name == "tanimoto" || name == "tanimoto-standard") return Metric::kTanimotoStandard;
  if (name == "tanimoto-rootnorm") return Metric::kTanimotoRootNorm;
  throw Error(ErrorCode::kInvalidArgument, "unknown similarity metric '" + std::string(name) + "'");
}

double cosine(std::span<const float> a, std::span<const float> b) {
  check_lengths(a, b, "cosine");
  const Dots d = dots(a, b);
  const double na = std::sqrt(d.aa);
  const double nb = std::sqrt(d.bb);
  if (na < kNearZero || nb < kNearZero) {
    throw Error(ErrorCode::kZeroNorm, "cosine: zero-norm operand");
  }
  return clamp_unit(d.ab / (na * nb));
}

double pearson(std::span<const float> a, std::span<const float> b) {
  check_lengths(a, b, "pearson");
  if (a.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "pearson: needs at least 2 elements");
  }
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= static_cast<double>(a.size());
  mean_b /= static_cast<double>(b.size());

  double cov = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  const double sa = std::sqrt(var_a);
  const double sb = std::sqrt(var_b);
  if (sa < kNearZero || sb < kNearZero) {
    throw Error(ErrorCode::kConstantVector, "pearson: constant operand has zero variance");
  }
  return clamp_unit(cov / (sa * sb));
}

double tanimoto_root_norm(std::span<const float> a, std::span<const float> b) {
  check_lengths(a, b, "tanimoto-rootnorm");
  const Dots d = dots(a, b);
  const double den = std::sqrt(d.aa) + std::sqrt(d.bb) - d.ab;
  if (std::abs(den) < kNearZero) {
    throw Error(ErrorCode::kDegenerateDenominator, "tanimoto-rootnorm: denominator vanishes");
  }
  return d.ab / den;
}

double tanimoto_standard(std::span<const float> a, std::span<const float> b) {
  check_lengths(a, b, "tanimoto-standard");
  const Dots d = dots(a, b);
  const double den = d.aa + d.bb - d.ab;
  if (std::abs(den) < kNearZero) {
    throw Error(ErrorCode::kDegenerateDenominator, "tanimoto-standard: denominator vanishes");
  }
  return clamp_unit(d.ab / den);
}

double similarity(Metric metric, std::span<const float> a, std::span<const float> b) {
  ++g_evaluations;
  switch (metric) {
    case Metric::kCosine: return cosine(a, b);
    case Metric::kPearson: return pearson(a, b);
    case Metric::kTanimotoRootNorm: return tanimoto_root_norm(a, b);
    case Metric::kTanimotoStandard: return tanimoto_standard(a, b);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown metric");
}

double mean_similarity(std::span<const float> x, const ComparisonSet& set, Metric metric) {
  if (set.members.empty()) {
    throw Error(ErrorCode::kEmptyInput, "mean_similarity: empty comparison set");
  }
  double sum = 0.0;
  for (const FeatureVector& member : set.members) {
    sum += similarity(metric, x, member.values());
  }
  return sum / static_cast<double>(set.members.size());
}

std::uint64_t similarity_evaluations() noexcept { return g_evaluations; }
void reset_similarity_evaluations() noexcept { g_evaluations = 0; }

}  // namespace ntd
