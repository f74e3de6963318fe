// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ntd/error.hpp"
#include "ntd/evalharness.hpp"
#include "ntd/featstore.hpp"
#include "oracle.hpp"

namespace {

using ntd::ClassId;
using ntd::ErrorCode;
using ntd::SyntheticSpec;

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const ntd::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected ntd::Error";
  return ErrorCode::kInvalidArgument;
}

TEST(Synthetic, NoiselessOrthogonalPairIsExact) {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.dim = 2;
  spec.records_per_class = 6;
  spec.heldout_per_class = 0;
  spec.noise_sigma = 0.0;
  const auto d = ntd::generate_synthetic(spec);
  ASSERT_EQ(d.store.size(), 12u);
  const auto& a = d.store.positions(ClassId{0});
  const auto& b = d.store.positions(ClassId{1});
  for (std::size_t i : a) {
    for (std::size_t j : a) EXPECT_EQ(ntd::cosine(d.store.record(i).vec, d.store.record(j).vec), 1.0);
    for (std::size_t j : b) EXPECT_EQ(ntd::cosine(d.store.record(i).vec, d.store.record(j).vec), 0.0);
  }
}

TEST(Synthetic, DefaultLayoutIsUnitAndPairwiseOrthogonal) {
  const auto m = ntd::ClassManifold::from_spec(SyntheticSpec{});
  ASSERT_EQ(m.classes(), 10u);
  ASSERT_EQ(m.dim(), 64u);
  for (std::uint32_t i = 0; i < 10; ++i) {
    double norm = 0.0;
    for (double x : m.mean(ClassId{i})) norm += x * x;
    EXPECT_NEAR(norm, 1.0, 1e-12);
    for (std::uint32_t j = i + 1; j < 10; ++j) EXPECT_NEAR(m.angle_deg(ClassId{i}, ClassId{j}), 90.0, 1e-9);
  }
}

class Equiangular : public ::testing::TestWithParam<double> {};

TEST_P(Equiangular, EveryPairMeetsTheTargetAngle) {
  SyntheticSpec spec;
  spec.classes = 12;
  spec.dim = 16;
  spec.min_angle_deg = GetParam();
  const auto m = ntd::ClassManifold::from_spec(spec);
  for (std::uint32_t i = 0; i < 12; ++i) {
    for (std::uint32_t j = i + 1; j < 12; ++j) {
      EXPECT_NEAR(m.angle_deg(ClassId{i}, ClassId{j}), GetParam(), 1e-6);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Angles, Equiangular, ::testing::Values(30.0, 60.0, 90.0, 95.0));

TEST(Synthetic, MoreClassesThanDimensionsUsesRejectionForAcuteAngles) {
  SyntheticSpec spec;
  spec.classes = 20;
  spec.dim = 8;
  spec.min_angle_deg = 40.0;
  spec.seed = 4;
  const auto m = ntd::ClassManifold::from_spec(spec);
  for (std::uint32_t i = 0; i < 20; ++i) {
    for (std::uint32_t j = i + 1; j < 20; ++j) EXPECT_GE(m.angle_deg(ClassId{i}, ClassId{j}), 40.0 - 1e-9);
  }
}

TEST(Synthetic, InfeasibleGeometry) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.dim = 4;
  spec.min_angle_deg = 150.0;  // below the simplex bound of -1/3
  EXPECT_EQ(code_of([&] { (void)ntd::ClassManifold::from_spec(spec); }), ErrorCode::kInfeasibleGeometry);
  spec.classes = 5;
  spec.dim = 2;
  spec.min_angle_deg = 90.0;
  EXPECT_EQ(code_of([&] { (void)ntd::ClassManifold::from_spec(spec); }), ErrorCode::kInfeasibleGeometry);
  spec.classes = 4;  // signed axes fit
  EXPECT_NO_THROW((void)ntd::ClassManifold::from_spec(spec));
}

TEST(Synthetic, SpecValidation) {
  SyntheticSpec spec;
  spec.classes = 1;
  EXPECT_EQ(code_of([&] { spec.validate(); }), ErrorCode::kInvalidArgument);
  spec = SyntheticSpec{};
  spec.noise_sigma = -1.0;
  EXPECT_EQ(code_of([&] { spec.validate(); }), ErrorCode::kInvalidArgument);
  spec = SyntheticSpec{};
  spec.spread = {1.0, 2.0};
  EXPECT_EQ(code_of([&] { spec.validate(); }), ErrorCode::kInvalidArgument);
  spec = SyntheticSpec{};
  spec.min_angle_deg = 0.0;
  EXPECT_EQ(code_of([&] { spec.validate(); }), ErrorCode::kInvalidArgument);
}

TEST(Synthetic, NoiseNormMatchesSigma) {
  SyntheticSpec spec;
  spec.dim = 256;
  spec.noise_sigma = 0.3;
  const auto m = ntd::ClassManifold::from_spec(spec);
  ntd::Rng rng(1);
  double total = 0.0;
  const int draws = 500;
  for (int k = 0; k < draws; ++k) {
    const auto v = m.sample(ClassId{2}, rng);
    double ss = 0.0;
    for (std::size_t i = 0; i < v.dim(); ++i) {
      const double e = v.values()[i] - m.mean(ClassId{2})[i];
      ss += e * e;
    }
    total += ss;
  }
  EXPECT_NEAR(std::sqrt(total / draws), 0.3, 0.01);
}

TEST(Synthetic, FixedSeedGivesByteIdenticalStore) {
  SyntheticSpec spec;
  spec.seed = 21;
  const auto a = ntd::encode_ntdf(ntd::generate_synthetic(spec).store);
  const auto b = ntd::encode_ntdf(ntd::generate_synthetic(spec).store);
  EXPECT_EQ(a, b);
  spec.seed = 22;
  EXPECT_NE(a, ntd::encode_ntdf(ntd::generate_synthetic(spec).store));
}

TEST(Synthetic, HeldoutIsCleanAndLabelled) {
  SyntheticSpec spec;
  spec.heldout_per_class = 7;
  const auto d = ntd::generate_synthetic(spec);
  ASSERT_EQ(d.heldout.size(), 70u);
  for (const auto& lq : d.heldout) {
    EXPECT_FALSE(lq.trigger);
    EXPECT_EQ(lq.source_class, lq.query.predicted_class);
  }
}

TEST(Simulation, CleanSessionsShareOneClass) {
  const auto m = ntd::ClassManifold::from_spec(SyntheticSpec{});
  const std::vector<ClassId> classes{ClassId{1}, ClassId{4}};
  const auto qs = ntd::simulate_clean(m, classes, 50, 3, 9);
  ASSERT_EQ(qs.size(), 150u);
  for (std::size_t s = 0; s < 50; ++s) {
    const ClassId c = qs[3 * s].query.predicted_class;
    EXPECT_TRUE(c == ClassId{1} || c == ClassId{4});
    for (int t = 0; t < 3; ++t) {
      EXPECT_EQ(qs[3 * s + t].query.predicted_class, c);
      EXPECT_EQ(qs[3 * s + t].source_class, c);
      EXPECT_FALSE(qs[3 * s + t].trigger);
    }
  }
}

TEST(Simulation, TriggersHijackTheLabel) {
  const auto m = ntd::ClassManifold::from_spec(SyntheticSpec{});
  const auto any = ntd::simulate_triggers(m, {std::nullopt, ClassId{3}, 400}, 1, 5);
  std::set<ClassId> sources;
  for (const auto& lq : any) {
    EXPECT_TRUE(lq.trigger);
    EXPECT_EQ(lq.query.predicted_class, ClassId{3});
    EXPECT_NE(lq.source_class, ClassId{3});
    sources.insert(lq.source_class);
  }
  EXPECT_EQ(sources.size(), 9u);

  const auto fixed = ntd::simulate_triggers(m, {ClassId{7}, ClassId{3}, 20}, 2, 5);
  ASSERT_EQ(fixed.size(), 40u);
  for (const auto& lq : fixed) EXPECT_EQ(lq.source_class, ClassId{7});

  EXPECT_EQ(code_of([&] { (void)ntd::simulate_triggers(m, {std::nullopt, ClassId{10}, 1}, 1, 5); }),
            ErrorCode::kUnknownClass);
}

}  // namespace
