// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

#include "ntd/error.hpp"
#include "ntd/evalharness.hpp"
#include "ntd/kvdoc.hpp"

namespace ntd {

namespace {

constexpr std::uint64_t kBenchStream = 0x62656e6368ULL;

Verdict finish(const RawQuery& query, const ValidationStore& store, const ThresholdTable& thresholds,
               std::size_t n, Metric metric, EmbeddingProvider& extractor, Rng& rng, bool lut) {
  const FeatureVector embedding = extractor.embed(query.input);
  if (embedding.dim() != store.dim()) {
    throw Error(ErrorCode::kDimMismatch, "extractor output dim does not match the store");
  }
  if (metric != thresholds.metric()) {
    throw Error(ErrorCode::kMetricMismatch, "detection metric does not match the threshold table");
  }
  const double threshold = thresholds.lookup(query.predicted_class);
  const auto set = sample_comparison_set(store, query.predicted_class, n, rng);

  double score = 0.0;
  if (lut) {
    score = mean_similarity(embedding, set, metric);
  } else {
    double sum = 0.0;
    for (std::size_t pos : set.positions) {
      const FeatureVector member =
          extractor.embed(RawInput{"record-" + std::to_string(pos), store.record(pos).vec});
      sum += similarity(metric, embedding, member);
    }
    score = sum / static_cast<double>(set.size());
  }

  Verdict v;
  v.cls = query.predicted_class;
  v.score = score;
  v.threshold = threshold;
  v.decision = score < threshold ? Decision::kTrigger : Decision::kBenign;
  v.comparison_positions = set.positions;
  return v;
}

}  // namespace

FeatureVector StubExtractor::embed(const RawInput& input) {
  count_.fetch_add(1);
  if (delay_.count() > 0) {
    std::this_thread::sleep_for(delay_);
  }
  return input.latent;
}

Verdict detect_with_lut(const RawQuery& query, const ValidationStore& store, const ThresholdTable& thresholds,
                        std::size_t n, Metric metric, EmbeddingProvider& extractor, Rng& rng) {
  return finish(query, store, thresholds, n, metric, extractor, rng, true);
}

Verdict detect_without_lut(const RawQuery& query, const ValidationStore& store,
                           const ThresholdTable& thresholds, std::size_t n, Metric metric,
                           EmbeddingProvider& extractor, Rng& rng) {
  return finish(query, store, thresholds, n, metric, extractor, rng, false);
}

std::vector<LatencyRow> bench_latency(const ValidationStore& store, std::span<const RawQuery> queries,
                                      EmbeddingProvider& extractor, const BenchConfig& cfg) {
  if (queries.empty()) throw Error(ErrorCode::kEmptyInput, "bench_latency needs at least one query");

  // The threshold value is irrelevant to timing; 0 keeps the full decision path.
  ThresholdTable table(cfg.metric, 1);
  table.set_global(0.0, Provenance{Preset::frr(0.05), ThresholdMethod::kRanking, cfg.seed, 0});

  std::vector<LatencyRow> rows;
  for (std::size_t n : cfg.n_values) {
    for (bool lut : {true, false}) {
      if ((lut && !cfg.lut_on) || (!lut && !cfg.lut_off)) continue;
      LatencyRow row;
      row.n = n;
      row.lut = lut;
      row.queries = queries.size();
      std::vector<double> ms;
      ms.reserve(queries.size());
      const std::uint64_t before = extractor.invocations();
      for (std::size_t i = 0; i < queries.size(); ++i) {
        Rng rng(derive_seed(cfg.seed, kBenchStream ^ n, i));
        const auto t0 = std::chrono::steady_clock::now();
        (void)finish(queries[i], store, table, n, cfg.metric, extractor, rng, lut);
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      row.invocations = extractor.invocations() - before;
      row.invocations_per_query = static_cast<double>(row.invocations) / static_cast<double>(queries.size());
      double total = 0.0;
      for (double v : ms) total += v;
      row.mean_ms = total / static_cast<double>(ms.size());
      std::sort(ms.begin(), ms.end());
      const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ms.size()))) - 1;
      row.p95_ms = ms[std::min(idx, ms.size() - 1)];
      rows.push_back(row);
    }
  }
  return rows;
}

void write_latency_csv(std::ostream& out, std::span<const LatencyRow> rows) {
  out << "n,lut,queries,mean_ms,p95_ms,invocations_per_query\n";
  for (const auto& r : rows) {
    out << r.n << ',' << (r.lut ? "on" : "off") << ',' << r.queries << ',' << format_shortest(r.mean_ms) << ','
        << format_shortest(r.p95_ms) << ',' << format_shortest(r.invocations_per_query) << '\n';
  }
}

}  // namespace ntd
