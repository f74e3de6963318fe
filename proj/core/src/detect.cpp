// SPDX-License-Identifier: Apache-2.0
#include "ntd/detect.hpp"

#include "ntd/error.hpp"

namespace ntd {

namespace {
constexpr std::uint64_t kSessionStream = 0x73657373696f6e00ULL;
}

std::string_view decision_name(Decision d) noexcept {
  return d == Decision::kBenign ? "benign" : "trigger";
}

std::string_view outcome_name(SessionOutcome o) noexcept {
  switch (o) {
    case SessionOutcome::kOpen: return "open";
    case SessionOutcome::kAccepted: return "accepted";
    case SessionOutcome::kRejected: return "rejected";
  }
  return "unknown";
}

Verdict detect_one(const Query& query, const ValidationStore& store, const ThresholdTable& thresholds,
                   std::size_t n, Metric metric, Rng& rng) {
  if (metric != thresholds.metric()) {
    throw Error(ErrorCode::kMetricMismatch,
                "detection metric " + std::string(metric_name(metric)) +
                    " does not match the threshold table's " +
                    std::string(metric_name(thresholds.metric())));
  }
  if (query.embedding.dim() != store.dim()) {
    throw Error(ErrorCode::kDimMismatch, "query '" + query.input_id + "' has dim " +
                                             std::to_string(query.embedding.dim()) +
                                             ", store dim is " + std::to_string(store.dim()));
  }
  if (n == 0) {
    throw Error(ErrorCode::kInvalidArgument, "comparison set size n must be positive");
  }
  const std::size_t available = store.class_size(query.predicted_class);
  if (available == 0) {
    throw Error(ErrorCode::kUnknownClass, "predicted class " +
                                              std::to_string(query.predicted_class.value) +
                                              " is not present in the validation store");
  }
  const double threshold = thresholds.lookup(query.predicted_class);

  Verdict v;
  v.cls = query.predicted_class;
  v.degraded = available < n;
  const auto set = sample_comparison_set(store, query.predicted_class, v.degraded ? available : n, rng);
  v.score = mean_similarity(query.embedding, set, metric);
  v.threshold = threshold;
  v.decision = v.score < threshold ? Decision::kTrigger : Decision::kBenign;
  v.comparison_positions = set.positions;
  return v;
}

Detector::Detector(std::shared_ptr<const ValidationStore> store, ThresholdTable thresholds,
                   std::size_t n, Metric metric)
    : store_(std::move(store)), thresholds_(std::move(thresholds)), n_(n), metric_(metric) {
  if (!store_) {
    throw Error(ErrorCode::kInvalidArgument, "detector needs a validation store");
  }
  if (n_ == 0) {
    throw Error(ErrorCode::kInvalidArgument, "comparison set size n must be positive");
  }
  if (metric_ != thresholds_.metric()) {
    throw Error(ErrorCode::kMetricMismatch,
                "detector metric " + std::string(metric_name(metric_)) +
                    " does not match the threshold table's " +
                    std::string(metric_name(thresholds_.metric())));
  }
}

Verdict Detector::detect(const Query& query, Rng& rng) const {
  return detect_one(query, *store_, thresholds_, n_, metric_, rng);
}

TrialSession::TrialSession(std::string session_id, int m) : id_(std::move(session_id)), m_(m) {
  if (m < 1) {
    throw Error(ErrorCode::kInvalidArgument, "trial count m must be at least 1");
  }
}

SessionOutcome TrialSession::record(const Verdict& verdict) {
  if (outcome_ != SessionOutcome::kOpen) {
    throw Error(ErrorCode::kSessionClosed, "session '" + id_ + "' is already " +
                                               std::string(outcome_name(outcome_)));
  }
  ++used_;
  if (verdict.decision == Decision::kBenign) {
    outcome_ = SessionOutcome::kAccepted;
  } else if (used_ == m_) {
    outcome_ = SessionOutcome::kRejected;
  }
  return outcome_;
}

SessionResult detect_session(std::span<const Query> queries, const Detector& detector,
                             const MultiTrialPlan& policy, std::uint64_t seed,
                             const std::string& session_id) {
  if (queries.size() > static_cast<std::size_t>(std::max(policy.m, 0))) {
    throw Error(ErrorCode::kInvalidArgument, "session '" + session_id + "' got " +
                                                 std::to_string(queries.size()) +
                                                 " queries, policy allows " + std::to_string(policy.m));
  }
  TrialSession session(session_id, policy.m);
  SessionResult result;
  for (std::size_t i = 0; i < queries.size() && session.outcome() == SessionOutcome::kOpen; ++i) {
    Rng rng(derive_seed(seed, kSessionStream, i));
    result.verdicts.push_back(detector.detect(queries[i], rng));
    session.record(result.verdicts.back());
  }
  result.outcome = session.outcome();
  result.trials_used = session.trials_used();
  return result;
}

}  // namespace ntd
