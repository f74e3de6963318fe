// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ntd/error.hpp"
#include "ntd/evalharness.hpp"

namespace {

using ntd::ClassId;
using ntd::Metric;
using namespace std::chrono_literals;

struct Fixture {
  ntd::SyntheticData data;
  std::vector<ntd::RawQuery> queries;
  ntd::ThresholdTable table{Metric::kPearson, 5};
};

Fixture make_fixture(std::size_t count) {
  ntd::SyntheticSpec spec;
  spec.seed = 12;
  spec.heldout_per_class = 5;
  Fixture f{ntd::generate_synthetic(spec), {}, ntd::ThresholdTable(Metric::kPearson, 5)};
  for (std::size_t i = 0; i < count && i < f.data.heldout.size(); ++i) {
    const auto& q = f.data.heldout[i].query;
    f.queries.push_back(ntd::RawQuery{ntd::RawInput{q.input_id, q.embedding}, q.predicted_class});
  }
  f.table.set_global(0.95, ntd::Provenance{});
  return f;
}

TEST(Latency, InvocationCounts) {
  const Fixture f = make_fixture(10);
  ntd::StubExtractor stub(0us);
  ntd::Rng rng(1);
  (void)ntd::detect_with_lut(f.queries[0], f.data.store, f.table, 5, Metric::kPearson, stub, rng);
  EXPECT_EQ(stub.invocations(), 1u);
  stub.reset();
  (void)ntd::detect_without_lut(f.queries[0], f.data.store, f.table, 5, Metric::kPearson, stub, rng);
  EXPECT_EQ(stub.invocations(), 6u);
}

TEST(Latency, LookupTableDoesNotChangeVerdicts) {
  const Fixture f = make_fixture(50);
  ntd::StubExtractor stub(0us);
  for (std::size_t i = 0; i < f.queries.size(); ++i) {
    ntd::Rng a(i), b(i);
    const auto with = ntd::detect_with_lut(f.queries[i], f.data.store, f.table, 5, Metric::kPearson, stub, a);
    const auto without =
        ntd::detect_without_lut(f.queries[i], f.data.store, f.table, 5, Metric::kPearson, stub, b);
    EXPECT_EQ(with.comparison_positions, without.comparison_positions);
    EXPECT_NEAR(with.score, without.score, 1e-12);
    if (std::abs(with.score - f.table.lookup(with.cls)) > 1e-9) EXPECT_EQ(with.decision, without.decision);
  }
}

TEST(Latency, BenchRowsReflectExtractorCost) {
  const Fixture f = make_fixture(3);
  ntd::StubExtractor stub(2ms);
  ntd::BenchConfig cfg;
  cfg.n_values = {4};
  const auto rows = ntd::bench_latency(f.data.store, f.queries, stub, cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].lut);
  EXPECT_EQ(rows[0].invocations_per_query, 1.0);
  EXPECT_FALSE(rows[1].lut);
  EXPECT_EQ(rows[1].invocations_per_query, 5.0);
  // Each query pays at least one extractor delay per call.
  EXPECT_GE(rows[0].mean_ms, 2.0);
  EXPECT_GE(rows[1].mean_ms, 10.0);
  EXPECT_GE(rows[0].p95_ms, rows[0].mean_ms * 0.5);

  std::ostringstream csv;
  ntd::write_latency_csv(csv, rows);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "n,lut,queries,mean_ms,p95_ms,invocations_per_query");
}

TEST(Latency, LookupOnlyBench) {
  const Fixture f = make_fixture(2);
  ntd::StubExtractor stub(0us);
  ntd::BenchConfig cfg;
  cfg.n_values = {3, 10};
  cfg.lut_off = false;
  const auto rows = ntd::bench_latency(f.data.store, f.queries, stub, cfg);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_TRUE(r.lut);
  EXPECT_THROW((void)ntd::bench_latency(f.data.store, {}, stub, cfg), ntd::Error);
}

}  // namespace
