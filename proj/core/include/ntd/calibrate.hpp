// SPDX-License-Identifier: Apache-2.0
//
// Offline threshold determination.
//
// Each calibration round picks an anchor record x, averages its similarity
// against n other records of x's class (intra) and against n records of one
// different class (inter). The preset FRR is the left tail of the intra
// distribution; the preset FAR is the right tail of the inter distribution.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ntd/featstore.hpp"
#include "ntd/simdist.hpp"

namespace ntd {

inline constexpr std::size_t kMinCalibrationRounds = 100;
inline constexpr std::size_t kDefaultCalibrationRounds = 1000;

enum class ThresholdMethod { kRanking, kFitGammaFamily };
enum class PresetKind { kFrr, kFar };
enum class ScopeKind { kGlobal, kPerClass, kGlobalSubset };

std::string_view method_name(ThresholdMethod m) noexcept;
ThresholdMethod parse_method(std::string_view name);
std::string_view scope_name(ScopeKind s) noexcept;
ScopeKind parse_scope(std::string_view name);

/// Exactly one of FRR/FAR is preset; the type makes that structural.
struct Preset {
  PresetKind kind = PresetKind::kFrr;
  double value = 0.05;

  static Preset frr(double v) { return {PresetKind::kFrr, v}; }
  static Preset far(double v) { return {PresetKind::kFar, v}; }
};

struct CalibrationScope {
  ScopeKind kind = ScopeKind::kGlobal;
  /// Per-class: the classes to calibrate (one table entry each).
  /// Global-subset: the classes anchors are drawn from.
  std::vector<ClassId> classes;

  static CalibrationScope global() { return {}; }
  static CalibrationScope per_class(std::vector<ClassId> cls) { return {ScopeKind::kPerClass, std::move(cls)}; }
  static CalibrationScope subset(std::vector<ClassId> cls) { return {ScopeKind::kGlobalSubset, std::move(cls)}; }
};

struct CalibrationConfig {
  std::size_t n = 3;
  std::size_t rounds = kDefaultCalibrationRounds;
  Preset preset;
  Metric metric = Metric::kPearson;
  ThresholdMethod method = ThresholdMethod::kRanking;
  CalibrationScope scope;
  std::uint64_t seed = 0;
  /// Classes never used as inter-class donors (for known high-confusion groups).
  std::vector<ClassId> donor_exclusions;
  /// Floor on class size for per-class calibration.
  std::size_t min_class_records = kDefaultMinClassRecords;

  /// Throws kInvalidArgument for n == 0, rounds < 100, or a preset outside (0, 1).
  void validate() const;
};

struct SimilaritySamples {
  std::vector<double> intra;
  std::vector<double> inter;
  /// Anchor record position per round (construction log).
  std::vector<std::size_t> anchors;
};

/// Runs the sampling rounds for a single scope. Per-class scope must name
/// exactly one class here; calibrate() fans out over several.
SimilaritySamples collect_samples(const ValidationStore& store, const CalibrationConfig& cfg);

/// Empirical preset-FRR quantile of the intra distribution: the element at
/// ascending rank ceil(p * N) - 1. With strict-less rejection this rejects at
/// most p * N of the samples, and one rank higher would reject at least p * N.
double threshold_by_ranking(const SimilaritySamples& samples, double preset_frr);
double rank_low_quantile(std::span<const double> values, double p);

/// Mirror of ranking on the inter distribution sorted descending. The
/// returned threshold t satisfies #{inter >= t} <= p * N; on a tie that would
/// break this, t is nudged to the next representable value above.
double threshold_by_far(const SimilaritySamples& samples, double preset_far);
double rank_high_quantile(std::span<const double> values, double p);

enum class GammaFamily { kGamma, kLogGamma };

/// Shifted gamma (or gamma-on-log-transform) fit.
///
/// kGamma:    v + shift ~ Gamma(shape, scale)
/// kLogGamma: -log(anchor - v) + shift ~ Gamma(shape, scale)
///
/// shift maps the sample minimum (after transform) to +1e-6.
struct GammaFit {
  GammaFamily family = GammaFamily::kGamma;
  double shape = 0.0;
  double scale = 0.0;
  double shift = 0.0;
  double anchor = 0.0;
  int iterations = 0;

  double quantile(double p) const;
  double cdf(double v) const;
};

GammaFit fit_gamma_family(std::span<const double> samples, GammaFamily family);

/// Fit-based counterpart of the ranking thresholds: log-gamma on intra for an
/// FRR preset, gamma on inter for a FAR preset.
double threshold_by_fit(const SimilaritySamples& samples, const Preset& preset);

/// Fractions of intra samples strictly below t and inter samples at or above t.
struct TailRates {
  double frr = 0.0;
  double far = 0.0;
};
TailRates offline_rates(const SimilaritySamples& samples, double threshold);

struct Provenance {
  Preset preset;
  ThresholdMethod method = ThresholdMethod::kRanking;
  std::uint64_t seed = 0;
  std::size_t rounds = 0;

  friend bool operator==(const Provenance& a, const Provenance& b) {
    return a.preset.kind == b.preset.kind && a.preset.value == b.preset.value &&
           a.method == b.method && a.seed == b.seed && a.rounds == b.rounds;
  }
};

/// Global threshold plus per-class overrides, valid only for the metric and
/// comparison-set size they were calibrated with.
class ThresholdTable {
 public:
  ThresholdTable() = default;
  ThresholdTable(Metric metric, std::size_t n) : metric_(metric), n_(n) {}

  Metric metric() const noexcept { return metric_; }
  std::size_t n() const noexcept { return n_; }

  void set_global(double threshold, Provenance prov);
  void set_class(ClassId cls, double threshold, Provenance prov);

  const std::optional<double>& global() const noexcept { return global_; }
  const std::map<ClassId, double>& per_class() const noexcept { return per_class_; }
  const std::map<std::string, Provenance>& provenance() const noexcept { return provenance_; }

  /// per_class[cls] if present, else global; kNoThreshold if neither.
  double lookup(ClassId cls) const;

  /// Canonical key order, reals at 17 significant digits.
  std::string serialize() const;
  static ThresholdTable deserialize(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static ThresholdTable load(const std::filesystem::path& path);

  friend bool operator==(const ThresholdTable&, const ThresholdTable&) = default;

 private:
  Metric metric_ = Metric::kPearson;
  std::size_t n_ = 0;
  std::optional<double> global_;
  std::map<ClassId, double> per_class_;
  std::map<std::string, Provenance> provenance_;
};

struct CalibrationEntry {
  std::string key;  // "global" or "class.<id>"
  double threshold = 0.0;
  SimilaritySamples samples;
  TailRates offline;
};

struct CalibrationResult {
  ThresholdTable table;
  std::vector<CalibrationEntry> entries;
};

CalibrationResult calibrate_detailed(const ValidationStore& store, const CalibrationConfig& cfg);
ThresholdTable calibrate(const ValidationStore& store, const CalibrationConfig& cfg);

/// Session-level rates for m independent trials, a session being rejected
/// only when every trial rejects:
///   FRR_m = FRR^m,  FAR_m = 1 - (1 - FAR)^m.
struct MultiTrialPlan {
  int m = 1;
  double per_trial_frr = 0.0;
  double per_trial_far = 0.0;
  double session_frr = 0.0;
  double session_far = 0.0;
};

MultiTrialPlan plan_multi_trial(double per_trial_frr, double per_trial_far, int m);

}  // namespace ntd
