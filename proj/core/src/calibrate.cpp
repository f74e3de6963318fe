// SPDX-License-Identifier: Apache-2.0
#include "ntd/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ntd/error.hpp"
#include "ntd/kvdoc.hpp"
#include "ntd/rng.hpp"

namespace ntd {

namespace {

constexpr std::uint64_t kGlobalStream = 0x676c6f62616c0000ULL;
constexpr std::uint64_t kPerClassStream = 0x636c617373000000ULL;
constexpr std::string_view kFormatTag = "ntd-thresholds/1";

std::string class_key(ClassId cls) { return "class." + std::to_string(cls.value); }

std::string too_small(ClassId cls, std::size_t have, std::size_t need) {
  return "class " + std::to_string(cls.value) + " is too small: " + std::to_string(have) +
         " records, needs at least " + std::to_string(need);
}

// ceil(p * N) - 1, guarded so that p * N landing a hair above an integer by
// rounding (0.05 * 1000) does not skip a rank.
std::size_t low_rank(double p, std::size_t count) {
  const double r = p * static_cast<double>(count);
  auto k = static_cast<std::size_t>(std::ceil(r - 1e-9));
  k = std::clamp<std::size_t>(k, 1, count);
  return k - 1;
}

void check_fraction(double p, const char* what) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must lie strictly inside (0, 1)");
  }
}

struct AnchorPlan {
  std::vector<std::size_t> pool;  // record positions eligible as anchors
  std::uint64_t stream = kGlobalStream;
};

SimilaritySamples run_rounds(const ValidationStore& store, const CalibrationConfig& cfg,
                             const AnchorPlan& plan) {
  const std::set<ClassId> excluded(cfg.donor_exclusions.begin(), cfg.donor_exclusions.end());

  // Donor candidates per anchor class, computed once.
  std::map<ClassId, std::vector<ClassId>> donors;
  for (std::size_t pos : plan.pool) {
    const ClassId cls = store.record(pos).cls;
    if (donors.contains(cls)) continue;
    auto& list = donors[cls];
    for (ClassId other : store.classes()) {
      if (other == cls || excluded.contains(other)) continue;
      if (store.class_size(other) < cfg.n) {
        throw Error(ErrorCode::kClassTooSmall, too_small(other, store.class_size(other), cfg.n) +
                                                   " to serve as an inter-class donor");
      }
      list.push_back(other);
    }
    if (list.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "class " + std::to_string(cls.value) +
                                                   " has no eligible inter-class donor class");
    }
  }

  SimilaritySamples out;
  out.intra.reserve(cfg.rounds);
  out.inter.reserve(cfg.rounds);
  out.anchors.reserve(cfg.rounds);
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    Rng rng(derive_seed(cfg.seed, plan.stream, round));
    const std::size_t anchor = plan.pool[rng.uniform_index(plan.pool.size())];
    const Record& rec = store.record(anchor);

    const auto intra_set = sample_comparison_set(store, rec.cls, cfg.n, rng, anchor);
    const auto& candidates = donors.at(rec.cls);
    const ClassId donor = candidates[rng.uniform_index(candidates.size())];
    const auto inter_set = sample_comparison_set(store, donor, cfg.n, rng);

    out.anchors.push_back(anchor);
    out.intra.push_back(mean_similarity(rec.vec, intra_set, cfg.metric));
    out.inter.push_back(mean_similarity(rec.vec, inter_set, cfg.metric));
  }
  return out;
}

AnchorPlan plan_for(const ValidationStore& store, const CalibrationConfig& cfg) {
  AnchorPlan plan;
  const std::size_t need = cfg.n + 1;
  auto add_class = [&](ClassId cls, std::size_t floor) {
    if (!store.has_class(cls)) {
      throw Error(ErrorCode::kUnknownClass,
                  "class " + std::to_string(cls.value) + " is not present in the validation store");
    }
    const std::size_t have = store.class_size(cls);
    if (have < floor) {
      throw Error(ErrorCode::kClassTooSmall, too_small(cls, have, floor));
    }
    const auto& pos = store.positions(cls);
    plan.pool.insert(plan.pool.end(), pos.begin(), pos.end());
  };

  switch (cfg.scope.kind) {
    case ScopeKind::kGlobal:
      for (ClassId cls : store.classes()) add_class(cls, need);
      break;
    case ScopeKind::kGlobalSubset: {
      if (cfg.scope.classes.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "global-subset scope needs at least one class");
      }
      std::set<ClassId> uniq(cfg.scope.classes.begin(), cfg.scope.classes.end());
      for (ClassId cls : uniq) add_class(cls, need);
      break;
    }
    case ScopeKind::kPerClass:
      if (cfg.scope.classes.size() != 1) {
        throw Error(ErrorCode::kInvalidArgument, "collect_samples: per-class scope needs exactly one class");
      }
      add_class(cfg.scope.classes.front(), std::max(need, cfg.min_class_records));
      plan.stream = kPerClassStream ^ cfg.scope.classes.front().value;
      break;
  }
  if (plan.pool.empty()) {
    throw Error(ErrorCode::kEmptyInput, "calibration scope contains no records");
  }
  return plan;
}

}  // namespace

std::string_view method_name(ThresholdMethod m) noexcept {
  return m == ThresholdMethod::kRanking ? "ranking" : "fit-gamma-family";
}

ThresholdMethod parse_method(std::string_view name) {
  if (name == "ranking") return ThresholdMethod::kRanking;
  if (name == "fit-gamma-family" || name == "fit") return ThresholdMethod::kFitGammaFamily;
  throw Error(ErrorCode::kInvalidArgument, "unknown threshold method '" + std::string(name) + "'");
}

std::string_view scope_name(ScopeKind s) noexcept {
  switch (s) {
    case ScopeKind::kGlobal: return "global";
    case ScopeKind::kPerClass: return "per-class";
    case ScopeKind::kGlobalSubset: return "global-subset";
  }
  return "unknown";
}

ScopeKind parse_scope(std::string_view name) {
  if (name == "global") return ScopeKind::kGlobal;
  if (name == "per-class") return ScopeKind::kPerClass;
  if (name == "global-subset") return ScopeKind::kGlobalSubset;
  throw Error(ErrorCode::kInvalidArgument, "unknown scope '" + std::string(name) + "'");
}

void CalibrationConfig::validate() const {
  if (n == 0) {
    throw Error(ErrorCode::kInvalidArgument, "comparison set size n must be positive");
  }
  if (rounds < kMinCalibrationRounds) {
    throw Error(ErrorCode::kInvalidArgument, "calibration needs at least " +
                                                 std::to_string(kMinCalibrationRounds) + " rounds");
  }
  check_fraction(preset.value, preset.kind == PresetKind::kFrr ? "preset FRR" : "preset FAR");
  if (scope.kind != ScopeKind::kGlobal && scope.classes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(scope_name(scope.kind)) + " scope needs a class list");
  }
}

SimilaritySamples collect_samples(const ValidationStore& store, const CalibrationConfig& cfg) {
  cfg.validate();
  return run_rounds(store, cfg, plan_for(store, cfg));
}

double rank_low_quantile(std::span<const double> values, double p) {
  if (values.empty()) {
    throw Error(ErrorCode::kEmptyInput, "ranking: no samples");
  }
  check_fraction(p, "preset FRR");
  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t k = low_rank(p, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  return sorted[k];
}

double rank_high_quantile(std::span<const double> values, double p) {
  if (values.empty()) {
    throw Error(ErrorCode::kEmptyInput, "ranking: no samples");
  }
  check_fraction(p, "preset FAR");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t k = low_rank(p, sorted.size());
  double t = sorted[k];
  const auto at_or_above = static_cast<double>(
      std::count_if(sorted.begin(), sorted.end(), [t](double v) { return v >= t; }));
  if (at_or_above > p * static_cast<double>(sorted.size()) + 1e-9) {
    t = std::nextafter(t, std::numeric_limits<double>::infinity());
  }
  return t;
}

double threshold_by_ranking(const SimilaritySamples& samples, double preset_frr) {
  return rank_low_quantile(samples.intra, preset_frr);
}

double threshold_by_far(const SimilaritySamples& samples, double preset_far) {
  return rank_high_quantile(samples.inter, preset_far);
}

TailRates offline_rates(const SimilaritySamples& samples, double threshold) {
  TailRates r;
  if (!samples.intra.empty()) {
    r.frr = static_cast<double>(std::count_if(samples.intra.begin(), samples.intra.end(),
                                              [&](double v) { return v < threshold; })) /
            static_cast<double>(samples.intra.size());
  }
  if (!samples.inter.empty()) {
    r.far = static_cast<double>(std::count_if(samples.inter.begin(), samples.inter.end(),
                                              [&](double v) { return v >= threshold; })) /
            static_cast<double>(samples.inter.size());
  }
  return r;
}

// ---------------------------------------------------------------------------
// ThresholdTable

void ThresholdTable::set_global(double threshold, Provenance prov) {
  global_ = threshold;
  provenance_["global"] = prov;
}

void ThresholdTable::set_class(ClassId cls, double threshold, Provenance prov) {
  per_class_[cls] = threshold;
  provenance_[class_key(cls)] = prov;
}

double ThresholdTable::lookup(ClassId cls) const {
  if (auto it = per_class_.find(cls); it != per_class_.end()) {
    return it->second;
  }
  if (global_) {
    return *global_;
  }
  throw Error(ErrorCode::kNoThreshold, "no threshold for class " + std::to_string(cls.value) +
                                           " and no global threshold");
}

namespace {

std::string render_provenance(const Provenance& p) {
  return std::string("preset=") + (p.preset.kind == PresetKind::kFrr ? "frr:" : "far:") +
         format_real17(p.preset.value) + ";method=" + std::string(method_name(p.method)) +
         ";seed=" + std::to_string(p.seed) + ";rounds=" + std::to_string(p.rounds);
}

Provenance parse_provenance(std::string_view text) {
  Provenance p;
  bool seen_preset = false;
  while (!text.empty()) {
    const auto semi = text.find(';');
    const std::string_view field = text.substr(0, semi);
    text = semi == std::string_view::npos ? std::string_view{} : text.substr(semi + 1);
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kParse, "malformed provenance field '" + std::string(field) + "'");
    }
    const auto key = field.substr(0, eq);
    const auto value = field.substr(eq + 1);
    if (key == "preset") {
      if (value.starts_with("frr:")) {
        p.preset = Preset::frr(parse_real(value.substr(4)));
      } else if (value.starts_with("far:")) {
        p.preset = Preset::far(parse_real(value.substr(4)));
      } else {
        throw Error(ErrorCode::kParse, "malformed provenance preset '" + std::string(value) + "'");
      }
      seen_preset = true;
    } else if (key == "method") {
      p.method = parse_method(value);
    } else if (key == "seed") {
      p.seed = parse_u64(value);
    } else if (key == "rounds") {
      p.rounds = parse_u64(value);
    } else {
      throw Error(ErrorCode::kParse, "unknown provenance field '" + std::string(key) + "'");
    }
  }
  if (!seen_preset) {
    throw Error(ErrorCode::kParse, "provenance without preset");
  }
  return p;
}

std::pair<std::string_view, std::string_view> split_metric(Metric m) {
  switch (m) {
    case Metric::kCosine: return {"cosine", "none"};
    case Metric::kPearson: return {"pearson", "none"};
    case Metric::kTanimotoRootNorm: return {"tanimoto", "rootnorm"};
    case Metric::kTanimotoStandard: return {"tanimoto", "standard"};
  }
  return {"unknown", "none"};
}

Metric join_metric(std::string_view metric, std::string_view variant) {
  if (metric == "tanimoto") {
    if (variant == "standard") return Metric::kTanimotoStandard;
    if (variant == "rootnorm") return Metric::kTanimotoRootNorm;
    throw Error(ErrorCode::kParse, "unknown tanimoto variant '" + std::string(variant) + "'");
  }
  if (variant != "none") {
    throw Error(ErrorCode::kParse, "metric " + std::string(metric) + " takes no variant");
  }
  return parse_metric(metric);
}

}  // namespace

std::string ThresholdTable::serialize() const {
  KvDocument doc;
  const auto [metric, variant] = split_metric(metric_);
  doc.set("format", std::string(kFormatTag));
  doc.set("metric", std::string(metric));
  doc.set("variant", std::string(variant));
  doc.set("n", std::to_string(n_));

  // Table-level rounds/seed/method mirror the first provenance entry; the
  // per-entry provenance lines are authoritative.
  if (!provenance_.empty()) {
    const Provenance& head = provenance_.begin()->second;
    doc.set("rounds", std::to_string(head.rounds));
    doc.set("seed", std::to_string(head.seed));
    doc.set("method", std::string(method_name(head.method)));
  }
  if (global_) {
    doc.set("global", format_real17(*global_));
  }
  for (const auto& [cls, t] : per_class_) {
    doc.set("per_class." + std::to_string(cls.value), format_real17(t));
  }
  for (const auto& [key, prov] : provenance_) {
    doc.set("provenance." + key, render_provenance(prov));
  }
  return doc.render();
}

ThresholdTable ThresholdTable::deserialize(std::string_view text) {
  const KvDocument doc = KvDocument::parse(text);
  if (doc.require("format") != kFormatTag) {
    throw Error(ErrorCode::kParse, "not a threshold table (format=" + std::string(doc.require("format")) + ")");
  }
  ThresholdTable table(join_metric(doc.require("metric"), doc.require("variant")),
                       parse_u64(doc.require("n")));
  for (const auto& [key, value] : doc.entries()) {
    if (key == "global") {
      table.global_ = parse_real(value);
    } else if (key.starts_with("per_class.")) {
      const auto id = parse_u64(std::string_view(key).substr(10));
      if (id > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::kParse, "class id out of range in '" + key + "'");
      }
      table.per_class_[ClassId{static_cast<std::uint32_t>(id)}] = parse_real(value);
    } else if (key.starts_with("provenance.")) {
      table.provenance_[key.substr(11)] = parse_provenance(value);
    } else if (key != "format" && key != "metric" && key != "variant" && key != "n" &&
               key != "rounds" && key != "seed" && key != "method") {
      throw Error(ErrorCode::kParse, "unknown threshold table key '" + key + "'");
    }
  }
  if (!table.global_ && table.per_class_.empty()) {
    throw Error(ErrorCode::kParse, "threshold table has neither a global nor a per-class entry");
  }
  return table;
}

void ThresholdTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  out << serialize();
  if (!out) {
    throw Error(ErrorCode::kIo, "write failed for " + path.string());
  }
}

ThresholdTable ThresholdTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

// ---------------------------------------------------------------------------

CalibrationResult calibrate_detailed(const ValidationStore& store, const CalibrationConfig& cfg) {
  cfg.validate();
  CalibrationResult result{ThresholdTable(cfg.metric, cfg.n), {}};
  const Provenance prov{cfg.preset, cfg.method, cfg.seed, cfg.rounds};

  auto derive = [&](const SimilaritySamples& s) {
    if (cfg.method == ThresholdMethod::kFitGammaFamily) {
      return threshold_by_fit(s, cfg.preset);
    }
    return cfg.preset.kind == PresetKind::kFrr ? threshold_by_ranking(s, cfg.preset.value)
                                               : threshold_by_far(s, cfg.preset.value);
  };

  if (cfg.scope.kind == ScopeKind::kPerClass) {
    std::set<ClassId> uniq(cfg.scope.classes.begin(), cfg.scope.classes.end());
    for (ClassId cls : uniq) {
      CalibrationConfig one = cfg;
      one.scope = CalibrationScope::per_class({cls});
      auto samples = run_rounds(store, one, plan_for(store, one));
      const double t = derive(samples);
      result.table.set_class(cls, t, prov);
      const TailRates rates = offline_rates(samples, t);
      result.entries.push_back({class_key(cls), t, std::move(samples), rates});
    }
  } else {
    auto samples = run_rounds(store, cfg, plan_for(store, cfg));
    const double t = derive(samples);
    result.table.set_global(t, prov);
    const TailRates rates = offline_rates(samples, t);
    result.entries.push_back({"global", t, std::move(samples), rates});
  }
  return result;
}

ThresholdTable calibrate(const ValidationStore& store, const CalibrationConfig& cfg) {
  return calibrate_detailed(store, cfg).table;
}

MultiTrialPlan plan_multi_trial(double per_trial_frr, double per_trial_far, int m) {
  if (m < 1) {
    throw Error(ErrorCode::kInvalidArgument, "trial count m must be at least 1");
  }
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(per_trial_frr) || !in_unit(per_trial_far)) {
    throw Error(ErrorCode::kInvalidArgument, "per-trial FRR/FAR must lie in [0, 1]");
  }
  MultiTrialPlan plan;
  plan.m = m;
  plan.per_trial_frr = per_trial_frr;
  plan.per_trial_far = per_trial_far;
  plan.session_frr = std::pow(per_trial_frr, m);
  // 1 - (1 - FAR)^m as FAR * sum_{k<m} (1 - FAR)^k: no cancellation for
  // small FAR, and exactly FAR at m = 1.
  const double keep = 1.0 - per_trial_far;
  double sum = 0.0;
  double term = 1.0;
  for (int k = 0; k < m; ++k) {
    sum += term;
    term *= keep;
  }
  plan.session_far = per_trial_far * sum;
  return plan;
}

}  // namespace ntd
