// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale evaluation: synthetic class manifolds, label-hijack trigger
// simulation, online FRR/FAR measurement, parameter sweeps and the
// lookup-table latency benchmark.
#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ntd/calibrate.hpp"
#include "ntd/detect.hpp"
#include "ntd/featstore.hpp"
#include "ntd/rng.hpp"

namespace ntd {

struct SyntheticSpec {
  std::size_t classes = 10;
  std::uint32_t dim = 64;
  std::size_t records_per_class = 200;
  std::size_t heldout_per_class = 100;
  /// Expected norm of the per-record noise around the unit mean direction
  /// (per-coordinate std is sigma / sqrt(dim)).
  double noise_sigma = 0.1;
  /// Per-class multiplier on noise_sigma (angular spread); empty means 1.0 for all.
  std::vector<double> spread;
  /// Pairwise angle between class mean directions, in degrees.
  double min_angle_deg = 90.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Generative model behind the synthetic store: class c draws
/// mean_c + (sigma_c / sqrt(dim)) * N(0, I).
class ClassManifold {
 public:
  ClassManifold(std::vector<std::vector<double>> means, std::vector<double> sigmas);

  /// Places class means with every pairwise angle >= spec.min_angle_deg.
  /// For classes <= dim the layout is exactly equiangular (Cholesky of the
  /// target Gram matrix); beyond that, angles below 90 degrees fall back to
  /// seeded rejection sampling. Throws kInfeasibleGeometry otherwise.
  static ClassManifold from_spec(const SyntheticSpec& spec);

  std::size_t classes() const noexcept { return means_.size(); }
  std::uint32_t dim() const noexcept { return static_cast<std::uint32_t>(means_.front().size()); }
  const std::vector<double>& mean(ClassId cls) const { return means_.at(cls.value); }
  double sigma(ClassId cls) const { return sigmas_.at(cls.value); }
  double angle_deg(ClassId a, ClassId b) const;

  FeatureVector sample(ClassId cls, Rng& rng) const;

 private:
  std::vector<std::vector<double>> means_;
  std::vector<double> sigmas_;
};

/// A query plus the ground truth the harness needs for scoring.
struct LabeledQuery {
  Query query;
  ClassId source_class;
  bool trigger = false;
};

struct SyntheticData {
  ValidationStore store;
  std::vector<LabeledQuery> heldout;
  ClassManifold manifold;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Clean queries grouped into sessions of m fresh draws from one class;
/// each session's class is uniform over `classes`.
std::vector<LabeledQuery> simulate_clean(const ClassManifold& manifold, std::span<const ClassId> classes,
                                         std::size_t sessions, int m, std::uint64_t seed);

/// Trigger inputs modelled as label hijacks: the embedding comes from the
/// source class (the reserved extractor ignores the trigger) while the
/// prediction is forced to the target class. A source of nullopt means any
/// class other than the target, chosen uniformly per session.
struct TriggerSimSpec {
  std::optional<ClassId> source_class;
  ClassId target_class;
  std::size_t count = 1000;
};

std::vector<LabeledQuery> simulate_triggers(const ClassManifold& manifold, const TriggerSimSpec& spec,
                                            int m, std::uint64_t seed);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

/// Wilson score interval.
Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.96);

struct ClassBreakdown {
  std::size_t clean = 0;
  std::size_t clean_rejected = 0;
  std::size_t trigger = 0;
  std::size_t trigger_accepted = 0;
};

struct VerdictLogEntry {
  bool trigger = false;
  ClassId predicted;
  ClassId source;
  Decision decision = Decision::kBenign;
  double score = 0.0;
};

struct EvalReport {
  std::string axis;
  std::string value;

  std::size_t clean_count = 0;
  std::size_t trigger_count = 0;
  std::size_t clean_rejected = 0;
  std::size_t trigger_accepted = 0;
  double frr = 0.0;
  double far = 0.0;
  Interval frr_ci;
  Interval far_ci;

  int m = 1;
  std::size_t clean_sessions = 0;
  std::size_t trigger_sessions = 0;
  std::size_t clean_sessions_rejected = 0;
  std::size_t trigger_sessions_accepted = 0;
  double frr_m = 0.0;
  double far_m = 0.0;
  Interval frr_m_ci;
  Interval far_m_ci;

  double threshold = 0.0;
  Metric metric = Metric::kPearson;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  /// Some trigger query's source class equals its predicted class; FAR then
  /// measures clean acceptance and is expected near 1 - FRR.
  bool degenerate = false;

  std::map<ClassId, ClassBreakdown> per_class;
  std::vector<VerdictLogEntry> log;
};

inline constexpr std::size_t kMinQueriesPerCategory = 100;

/// Per-trial and per-session online rates. With m > 1 the query lists are
/// consumed in consecutive chunks of m (one session per chunk); every query
/// is also scored on its own for the single-trial rates. Query i of each list
/// samples its comparison set from derive_seed(seed, list stream, i), so
/// results do not depend on the thresholds (decisions are monotone in them).
EvalReport measure_rates(const ValidationStore& store, const ThresholdTable& thresholds,
                         std::span<const LabeledQuery> clean, std::span<const LabeledQuery> triggers,
                         std::size_t n, Metric metric, int m, std::uint64_t seed);

struct EvalConfig {
  SyntheticSpec synthetic;
  CalibrationConfig calibration;
  std::optional<ClassId> trigger_source;
  ClassId trigger_target{0};
  std::size_t clean_sessions = 1000;
  std::size_t trigger_sessions = 1000;
  int m = 1;
  std::uint64_t seed = 0;
};

struct EvalRun {
  ThresholdTable thresholds;
  EvalReport report;
};

/// Generate, calibrate, simulate, measure. Per-class scope calibrates the
/// trigger target class and draws clean queries from that class only.
EvalRun run_evaluation(const EvalConfig& cfg);

enum class SweepAxis { kN, kMetric, kPresetFrr, kScope };
std::string_view axis_name(SweepAxis a) noexcept;
SweepAxis parse_axis(std::string_view name);

std::vector<EvalReport> sweep(SweepAxis axis, std::span<const std::string> values, const EvalConfig& base);

/// Column order: axis,value,clean_count,trigger_count,frr,far,frr_m,far_m,threshold,metric,n,seed
void write_csv(std::ostream& out, std::span<const EvalReport> reports);
inline constexpr std::string_view kEvalCsvHeader =
    "axis,value,clean_count,trigger_count,frr,far,frr_m,far_m,threshold,metric,n,seed";

// ---------------------------------------------------------------------------
// Latency

/// Stand-in for a raw input (an image): the extractor turns it into an embedding.
struct RawInput {
  std::string id;
  FeatureVector latent;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual FeatureVector embed(const RawInput& input) = 0;
  virtual std::uint64_t invocations() const = 0;
};

/// Returns the latent unchanged after an artificial delay; counts calls.
class StubExtractor final : public EmbeddingProvider {
 public:
  explicit StubExtractor(std::chrono::microseconds delay) : delay_(delay) {}

  FeatureVector embed(const RawInput& input) override;
  std::uint64_t invocations() const override { return count_.load(); }
  void reset() { count_.store(0); }

 private:
  std::chrono::microseconds delay_;
  std::atomic<std::uint64_t> count_{0};
};

struct RawQuery {
  RawInput input;
  ClassId predicted_class;
};

/// Detection with the lookup table: one extractor call for the query, the
/// comparison set comes from the precomputed store.
Verdict detect_with_lut(const RawQuery& query, const ValidationStore& store,
                        const ThresholdTable& thresholds, std::size_t n, Metric metric,
                        EmbeddingProvider& extractor, Rng& rng);

/// Detection without it: the n comparison members are re-embedded on every
/// query (n + 1 extractor calls). Samples the same positions as the LUT path
/// for the same Rng state.
Verdict detect_without_lut(const RawQuery& query, const ValidationStore& store,
                           const ThresholdTable& thresholds, std::size_t n, Metric metric,
                           EmbeddingProvider& extractor, Rng& rng);

struct LatencyRow {
  std::size_t n = 0;
  bool lut = true;
  std::size_t queries = 0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  std::uint64_t invocations = 0;
  double invocations_per_query = 0.0;
};

struct BenchConfig {
  std::vector<std::size_t> n_values{3, 10, 20, 40};
  std::size_t queries = 10;
  bool lut_on = true;
  bool lut_off = true;
  Metric metric = Metric::kPearson;
  std::uint64_t seed = 0;
};

std::vector<LatencyRow> bench_latency(const ValidationStore& store, std::span<const RawQuery> queries,
                                      EmbeddingProvider& extractor, const BenchConfig& cfg);

void write_latency_csv(std::ostream& out, std::span<const LatencyRow> rows);

}  // namespace ntd
