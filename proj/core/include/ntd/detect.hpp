// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ntd/calibrate.hpp"
#include "ntd/featstore.hpp"
#include "ntd/rng.hpp"
#include "ntd/simdist.hpp"

namespace ntd {

/// One input to check: the model-under-test's predicted class plus the
/// independent extractor's embedding of the same input.
struct Query {
  std::string input_id;
  ClassId predicted_class;
  FeatureVector embedding;
};

enum class Decision { kBenign, kTrigger };

std::string_view decision_name(Decision d) noexcept;

struct Verdict {
  Decision decision = Decision::kBenign;
  double score = 0.0;
  double threshold = 0.0;
  ClassId cls;
  /// Store positions of the comparison set (audit trail).
  std::vector<std::size_t> comparison_positions;
  /// Set when the class held fewer than n records and the set was shrunk.
  bool degraded = false;
};

/// Scores the query against a freshly sampled comparison set of its
/// predicted class, drawn from the precomputed store (no extractor calls).
/// Rejects (kTrigger) iff score < threshold; a score equal to the threshold
/// is benign.
Verdict detect_one(const Query& query, const ValidationStore& store, const ThresholdTable& thresholds,
                   std::size_t n, Metric metric, Rng& rng);

/// Immutable bundle of store + thresholds + detection parameters; safe to
/// share across threads.
class Detector {
 public:
  Detector(std::shared_ptr<const ValidationStore> store, ThresholdTable thresholds, std::size_t n,
           Metric metric);

  Verdict detect(const Query& query, Rng& rng) const;

  const ValidationStore& store() const noexcept { return *store_; }
  const ThresholdTable& thresholds() const noexcept { return thresholds_; }
  std::size_t n() const noexcept { return n_; }
  Metric metric() const noexcept { return metric_; }

 private:
  std::shared_ptr<const ValidationStore> store_;
  ThresholdTable thresholds_;
  std::size_t n_;
  Metric metric_;
};

enum class SessionOutcome { kOpen, kAccepted, kRejected };

std::string_view outcome_name(SessionOutcome o) noexcept;

/// Up to m trials for one subject: accepted on the first benign verdict,
/// rejected once m trials have all come back as triggers.
class TrialSession {
 public:
  TrialSession(std::string session_id, int m);

  /// Throws kSessionClosed once the outcome is decided.
  SessionOutcome record(const Verdict& verdict);

  const std::string& session_id() const noexcept { return id_; }
  int m() const noexcept { return m_; }
  int trials_used() const noexcept { return used_; }
  SessionOutcome outcome() const noexcept { return outcome_; }

 private:
  std::string id_;
  int m_;
  int used_ = 0;
  SessionOutcome outcome_ = SessionOutcome::kOpen;
};

struct SessionResult {
  SessionOutcome outcome = SessionOutcome::kOpen;
  int trials_used = 0;
  std::vector<Verdict> verdicts;
};

/// Runs queries in order until the session closes. Trial i samples its
/// comparison set from derive_seed(seed, session stream, i), so every trial
/// is independent. Throws kInvalidArgument if more than m queries are given.
SessionResult detect_session(std::span<const Query> queries, const Detector& detector,
                             const MultiTrialPlan& policy, std::uint64_t seed,
                             const std::string& session_id = {});

}  // namespace ntd
