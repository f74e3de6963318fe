// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ntd/calibrate.hpp"
#include "ntd/error.hpp"

namespace {

using ntd::GammaFamily;

std::vector<double> gamma_draws(double shape, double scale, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::gamma_distribution<double> d(shape, scale);
  std::vector<double> v(count);
  for (double& x : v) x = d(gen);
  return v;
}

double empirical_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(std::ceil(p * v.size())) - 1];
}

TEST(GammaFit, RecoversShapeAndScale) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto v = gamma_draws(2.0, 0.1, 10000, seed);
    const auto fit = ntd::fit_gamma_family(v, GammaFamily::kGamma);
    EXPECT_EQ(fit.shift, 0.0);
    EXPECT_NEAR(fit.shape, 2.0, 0.2) << "seed " << seed;
    EXPECT_NEAR(fit.scale, 0.1, 0.01) << "seed " << seed;
    EXPECT_LE(fit.iterations, 100);
  }
}

TEST(GammaFit, MaximumLikelihoodStationarity) {
  // At the MLE: log(k) - digamma(k) = log(mean) - mean(log y). Check the
  // score equation by finite differences of the profile log-likelihood.
  const auto v = gamma_draws(3.5, 0.2, 5000, 9);
  const auto fit = ntd::fit_gamma_family(v, GammaFamily::kGamma);
  double mean = 0.0, mean_log = 0.0;
  for (double x : v) {
    mean += x;
    mean_log += std::log(x);
  }
  mean /= v.size();
  mean_log /= v.size();
  auto profile = [&](double k) { return (k - 1.0) * mean_log - k - std::lgamma(k) - k * std::log(mean / k); };
  const double h = 1e-5;
  const double slope = (profile(fit.shape + h) - profile(fit.shape - h)) / (2 * h);
  EXPECT_NEAR(slope, 0.0, 1e-6);
}

TEST(GammaFit, QuantileSelfConsistency) {
  const auto v = gamma_draws(2.0, 0.1, 10000, 4);
  const auto fit = ntd::fit_gamma_family(v, GammaFamily::kGamma);
  for (double p : {0.01, 0.05}) {
    EXPECT_LT(std::abs(fit.quantile(p) - empirical_quantile(v, p)), 0.02) << "p " << p;
    EXPECT_NEAR(fit.cdf(fit.quantile(p)), p, 1e-9);
  }
}

TEST(GammaFit, ShiftAppliedOnlyWhenSupportViolated) {
  auto v = gamma_draws(4.0, 0.05, 2000, 5);
  for (double& x : v) x -= 0.5;  // push part of the sample below zero
  const double lo = *std::min_element(v.begin(), v.end());
  ASSERT_LT(lo, 0.0);
  const auto fit = ntd::fit_gamma_family(v, GammaFamily::kGamma);
  EXPECT_NEAR(fit.shift, 1e-6 - lo, 1e-15);
  EXPECT_NEAR(fit.cdf(lo), 0.0, 1e-3);
  EXPECT_EQ(fit.cdf(lo - 1.0), 0.0);
}

TEST(GammaFit, LogGammaOnSimilarityLikeSamples) {
  // Intra-class similarities cluster just below 1 with a long left tail.
  std::mt19937_64 gen(6);
  std::gamma_distribution<double> d(2.0, 0.02);
  std::vector<double> v(5000);
  for (double& x : v) x = 1.0 - d(gen);
  const auto fit = ntd::fit_gamma_family(v, GammaFamily::kLogGamma);
  EXPECT_GT(fit.anchor, *std::max_element(v.begin(), v.end()));
  for (double p : {0.01, 0.05}) {
    const double q = fit.quantile(p);
    EXPECT_LT(q, 1.0);
    EXPECT_LT(std::abs(q - empirical_quantile(v, p)), 0.02) << "p " << p;
    EXPECT_NEAR(fit.cdf(q), p, 1e-9);
  }
}

TEST(GammaFit, Errors) {
  const std::vector<double> constant(500, 0.7);
  try {
    (void)ntd::fit_gamma_family(constant, GammaFamily::kGamma);
    FAIL();
  } catch (const ntd::Error& e) {
    EXPECT_EQ(e.code(), ntd::ErrorCode::kDegenerateVariance);
  }
  EXPECT_THROW((void)ntd::fit_gamma_family(std::vector<double>(99, 1.0), GammaFamily::kGamma), ntd::Error);
  auto v = gamma_draws(2.0, 0.1, 200, 1);
  v[3] = std::nan("");
  EXPECT_THROW((void)ntd::fit_gamma_family(v, GammaFamily::kGamma), ntd::Error);
}

TEST(ThresholdByFit, AgreesWithRankingOnWellBehavedSamples) {
  std::mt19937_64 gen(8);
  std::gamma_distribution<double> intra(3.0, 0.02);
  std::gamma_distribution<double> inter(3.0, 0.05);
  ntd::SimilaritySamples s;
  for (int i = 0; i < 5000; ++i) {
    s.intra.push_back(1.0 - intra(gen));
    s.inter.push_back(inter(gen));
  }
  EXPECT_NEAR(ntd::threshold_by_fit(s, ntd::Preset::frr(0.05)), ntd::threshold_by_ranking(s, 0.05), 0.01);
  EXPECT_NEAR(ntd::threshold_by_fit(s, ntd::Preset::far(0.05)), ntd::threshold_by_far(s, 0.05), 0.02);
}

}  // namespace
