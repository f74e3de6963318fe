// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <ostream>

#include "ntd/error.hpp"
#include "ntd/evalharness.hpp"
#include "ntd/kvdoc.hpp"

namespace ntd {

namespace {

constexpr std::uint64_t kCleanQueryStream = 0x636c65616e2d71ULL;
constexpr std::uint64_t kTriggerQueryStream = 0x747269672d71ULL;
constexpr std::uint64_t kSimCleanStream = 0x73696d2d636cULL;
constexpr std::uint64_t kSimTriggerStream = 0x73696d2d7472ULL;

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

struct ListResult {
  std::size_t flagged = 0;           // clean: rejected, trigger: accepted
  std::size_t sessions = 0;
  std::size_t sessions_flagged = 0;  // clean: session rejected, trigger: session accepted
};

ListResult score_list(const ValidationStore& store, const ThresholdTable& thresholds,
                      std::span<const LabeledQuery> list, bool trigger, std::size_t n, Metric metric,
                      int m, std::uint64_t seed, EvalReport& report) {
  ListResult r;
  const std::uint64_t stream = trigger ? kTriggerQueryStream : kCleanQueryStream;
  std::vector<Decision> decisions;
  decisions.reserve(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    const LabeledQuery& lq = list[i];
    Rng rng(derive_seed(seed, stream, i));
    const Verdict v = detect_one(lq.query, store, thresholds, n, metric, rng);
    decisions.push_back(v.decision);

    auto& bucket = report.per_class[lq.query.predicted_class];
    if (trigger) {
      ++bucket.trigger;
      if (v.decision == Decision::kBenign) {
        ++bucket.trigger_accepted;
        ++r.flagged;
      }
      if (lq.source_class == lq.query.predicted_class) report.degenerate = true;
    } else {
      ++bucket.clean;
      if (v.decision == Decision::kTrigger) {
        ++bucket.clean_rejected;
        ++r.flagged;
      }
    }
    report.log.push_back(VerdictLogEntry{trigger, lq.query.predicted_class, lq.source_class, v.decision, v.score});
  }

  // Sessions: chunks of m, accepted on the first benign verdict.
  for (std::size_t s = 0; s + static_cast<std::size_t>(m) <= decisions.size(); s += static_cast<std::size_t>(m)) {
    TrialSession session("s" + std::to_string(s / static_cast<std::size_t>(m)), m);
    for (int t = 0; t < m && session.outcome() == SessionOutcome::kOpen; ++t) {
      Verdict v;
      v.decision = decisions[s + static_cast<std::size_t>(t)];
      session.record(v);
    }
    ++r.sessions;
    const bool accepted = session.outcome() == SessionOutcome::kAccepted;
    if (trigger ? accepted : !accepted) ++r.sessions_flagged;
  }
  return r;
}

}  // namespace

Interval wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

EvalReport measure_rates(const ValidationStore& store, const ThresholdTable& thresholds,
                         std::span<const LabeledQuery> clean, std::span<const LabeledQuery> triggers,
                         std::size_t n, Metric metric, int m, std::uint64_t seed) {
  if (clean.empty() || triggers.empty()) {
    throw Error(ErrorCode::kEmptyInput, "measure_rates needs both clean and trigger queries");
  }
  if (clean.size() < kMinQueriesPerCategory || triggers.size() < kMinQueriesPerCategory) {
    throw Error(ErrorCode::kInvalidArgument, "measure_rates needs at least " +
                                                 std::to_string(kMinQueriesPerCategory) +
                                                 " queries per category");
  }
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "trial count m must be at least 1");
  const auto mm = static_cast<std::size_t>(m);
  if (clean.size() % mm != 0 || triggers.size() % mm != 0) {
    throw Error(ErrorCode::kInvalidArgument, "query counts must be multiples of m=" + std::to_string(m));
  }

  EvalReport report;
  report.m = m;
  report.n = n;
  report.metric = metric;
  report.seed = seed;
  report.threshold = thresholds.lookup(triggers.front().query.predicted_class);
  report.log.reserve(clean.size() + triggers.size());

  const ListResult c = score_list(store, thresholds, clean, false, n, metric, m, seed, report);
  const ListResult t = score_list(store, thresholds, triggers, true, n, metric, m, seed, report);

  report.clean_count = clean.size();
  report.trigger_count = triggers.size();
  report.clean_rejected = c.flagged;
  report.trigger_accepted = t.flagged;
  report.frr = ratio(c.flagged, clean.size());
  report.far = ratio(t.flagged, triggers.size());
  report.frr_ci = wilson_interval(c.flagged, clean.size());
  report.far_ci = wilson_interval(t.flagged, triggers.size());

  report.clean_sessions = c.sessions;
  report.trigger_sessions = t.sessions;
  report.clean_sessions_rejected = c.sessions_flagged;
  report.trigger_sessions_accepted = t.sessions_flagged;
  report.frr_m = ratio(c.sessions_flagged, c.sessions);
  report.far_m = ratio(t.sessions_flagged, t.sessions);
  report.frr_m_ci = wilson_interval(c.sessions_flagged, c.sessions);
  report.far_m_ci = wilson_interval(t.sessions_flagged, t.sessions);
  return report;
}

EvalRun run_evaluation(const EvalConfig& cfg) {
  const SyntheticData data = generate_synthetic(cfg.synthetic);

  CalibrationConfig calib = cfg.calibration;
  std::vector<ClassId> clean_classes;
  if (calib.scope.kind == ScopeKind::kPerClass) {
    calib.scope.classes = {cfg.trigger_target};
    clean_classes = {cfg.trigger_target};
  } else {
    clean_classes = data.store.classes();
  }
  ThresholdTable table = calibrate(data.store, calib);

  const auto clean = simulate_clean(data.manifold, clean_classes, cfg.clean_sessions, cfg.m,
                                    derive_seed(cfg.seed, kSimCleanStream, 0));
  const auto triggers =
      simulate_triggers(data.manifold, TriggerSimSpec{cfg.trigger_source, cfg.trigger_target, cfg.trigger_sessions},
                        cfg.m, derive_seed(cfg.seed, kSimTriggerStream, 0));
  EvalReport report = measure_rates(data.store, table, clean, triggers, calib.n, calib.metric, cfg.m, cfg.seed);
  return EvalRun{std::move(table), std::move(report)};
}

std::string_view axis_name(SweepAxis a) noexcept {
  switch (a) {
    case SweepAxis::kN: return "n";
    case SweepAxis::kMetric: return "metric";
    case SweepAxis::kPresetFrr: return "preset_frr";
    case SweepAxis::kScope: return "scope";
  }
  return "unknown";
}

SweepAxis parse_axis(std::string_view name) {
  if (name == "n") return SweepAxis::kN;
  if (name == "metric") return SweepAxis::kMetric;
  if (name == "preset_frr" || name == "preset-frr" || name == "frr") return SweepAxis::kPresetFrr;
  if (name == "scope") return SweepAxis::kScope;
  throw Error(ErrorCode::kInvalidArgument, "unknown sweep axis '" + std::string(name) + "'");
}

std::vector<EvalReport> sweep(SweepAxis axis, std::span<const std::string> values, const EvalConfig& base) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "sweep needs at least one axis value");
  std::vector<EvalReport> out;
  out.reserve(values.size());
  for (const std::string& value : values) {
    EvalConfig cfg = base;
    switch (axis) {
      case SweepAxis::kN: cfg.calibration.n = static_cast<std::size_t>(parse_u64(value)); break;
      case SweepAxis::kMetric: cfg.calibration.metric = parse_metric(value); break;
      case SweepAxis::kPresetFrr: cfg.calibration.preset = Preset::frr(parse_real(value)); break;
      case SweepAxis::kScope: cfg.calibration.scope.kind = parse_scope(value); break;
    }
    EvalReport report = run_evaluation(cfg).report;
    report.axis = std::string(axis_name(axis));
    report.value = value;
    out.push_back(std::move(report));
  }
  return out;
}

void write_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << kEvalCsvHeader << '\n';
  for (const auto& r : reports) {
    out << r.axis << ',' << r.value << ',' << r.clean_count << ',' << r.trigger_count << ','
        << format_shortest(r.frr) << ',' << format_shortest(r.far) << ',' << format_shortest(r.frr_m) << ','
        << format_shortest(r.far_m) << ',' << format_real17(r.threshold) << ',' << metric_name(r.metric) << ','
        << r.n << ',' << r.seed << '\n';
  }
}

}  // namespace ntd
