// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "ntd/featstore.hpp"

namespace ntd {

/// tanimoto_root_norm divides by sqrt(aa) + sqrt(bb) - ab; it is unbounded and
/// not 1 at identity in general. tanimoto_standard is the bounded form and the
/// default whenever "tanimoto" is requested by name.
enum class Metric { kCosine, kPearson, kTanimotoRootNorm, kTanimotoStandard };

inline constexpr double kNearZero = 1e-12;

std::string_view metric_name(Metric m) noexcept;
/// Accepts cosine, pearson, tanimoto (= tanimoto-standard), tanimoto-standard,
/// tanimoto-rootnorm. Throws kInvalidArgument otherwise.
Metric parse_metric(std::string_view name);

double cosine(std::span<const float> a, std::span<const float> b);
double pearson(std::span<const float> a, std::span<const float> b);
double tanimoto_root_norm(std::span<const float> a, std::span<const float> b);
double tanimoto_standard(std::span<const float> a, std::span<const float> b);

double similarity(Metric metric, std::span<const float> a, std::span<const float> b);

/// Arithmetic mean of similarity(metric, x, member) over the set.
double mean_similarity(std::span<const float> x, const ComparisonSet& set, Metric metric);

/// Per-thread count of pairwise similarity evaluations, for instrumentation.
std::uint64_t similarity_evaluations() noexcept;
void reset_similarity_evaluations() noexcept;

}  // namespace ntd
