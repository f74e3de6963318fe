// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <memory>

#include "ntd/calibrate.hpp"
#include "ntd/detect.hpp"
#include "ntd/evalharness.hpp"
#include "ntd/simdist.hpp"

namespace {

std::vector<float> noise(std::size_t dim, std::uint64_t seed) {
  ntd::Rng rng(seed);
  std::vector<float> v(dim);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return v;
}

void BM_Similarity(benchmark::State& state, ntd::Metric metric) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto a = noise(dim, 1);
  const auto b = noise(dim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ntd::similarity(metric, a, b));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK_CAPTURE(BM_Similarity, cosine, ntd::Metric::kCosine)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK_CAPTURE(BM_Similarity, pearson, ntd::Metric::kPearson)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK_CAPTURE(BM_Similarity, tanimoto, ntd::Metric::kTanimotoStandard)->RangeMultiplier(4)->Range(64, 4096);

struct DetectFixture {
  ntd::SyntheticData data;
  std::unique_ptr<ntd::Detector> detector;
};

const DetectFixture& fixture() {
  static const DetectFixture f = [] {
    ntd::SyntheticSpec spec;
    spec.seed = 1;
    spec.heldout_per_class = 10;
    auto data = ntd::generate_synthetic(spec);
    ntd::CalibrationConfig cfg;
    cfg.rounds = 1000;
    auto table = ntd::calibrate(data.store, cfg);
    auto store = std::make_shared<const ntd::ValidationStore>(data.store);
    auto det = std::make_unique<ntd::Detector>(store, std::move(table), cfg.n, cfg.metric);
    return DetectFixture{std::move(data), std::move(det)};
  }();
  return f;
}

void BM_DetectOne(benchmark::State& state) {
  const auto& f = fixture();
  const auto n = static_cast<std::size_t>(state.range(0));
  const ntd::Detector det(std::make_shared<const ntd::ValidationStore>(f.data.store), f.detector->thresholds(), n,
                          f.detector->metric());
  ntd::Rng rng(7);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(det.detect(f.data.heldout[i++ % f.data.heldout.size()].query, rng));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DetectOne)->Arg(3)->Arg(10)->Arg(40);

void BM_Calibrate(benchmark::State& state) {
  const auto& f = fixture();
  ntd::CalibrationConfig cfg;
  cfg.rounds = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ntd::calibrate(f.data.store, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Calibrate)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
