// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>

#include "ntd/error.hpp"
#include "ntd/evalharness.hpp"

namespace ntd {

namespace {

constexpr std::uint64_t kLayoutStream = 0x6c61796f7574ULL;
constexpr std::uint64_t kRecordStream = 0x7265636f7264ULL;
constexpr std::uint64_t kHeldoutStream = 0x68656c646f7574ULL;
constexpr std::uint64_t kCleanStream = 0x636c65616eULL;
constexpr std::uint64_t kTriggerStream = 0x74726967676572ULL;
constexpr int kMaxRejectionAttempts = 10000;

double pairwise_cos(double angle_deg) {
  if (angle_deg == 90.0) return 0.0;
  const double c = std::cos(angle_deg * std::numbers::pi / 180.0);
  return std::abs(c) < 1e-15 ? 0.0 : c;
}

[[noreturn]] void infeasible(const SyntheticSpec& spec, const std::string& why) {
  throw Error(ErrorCode::kInfeasibleGeometry,
              std::to_string(spec.classes) + " classes at minimum angle " +
                  std::to_string(spec.min_angle_deg) + " deg in dim " + std::to_string(spec.dim) +
                  ": " + why);
}

// Rows of the Cholesky factor of (1 - c) I + c 11^T: k unit vectors with all
// pairwise dot products equal to c.
std::vector<std::vector<double>> equiangular(const SyntheticSpec& spec, double c) {
  const std::size_t k = spec.classes;
  std::vector<std::vector<double>> L(k, std::vector<double>(spec.dim, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = (i == j) ? 1.0 : c;
      for (std::size_t p = 0; p < j; ++p) sum -= L[i][p] * L[j][p];
      if (i == j) {
        if (sum < -1e-12) infeasible(spec, "pairwise cosine below the simplex bound -1/(k-1)");
        L[i][i] = std::sqrt(std::max(sum, 0.0));
      } else {
        L[i][j] = L[j][j] > 0.0 ? sum / L[j][j] : 0.0;
      }
    }
  }
  return L;
}

std::vector<std::vector<double>> signed_axes(const SyntheticSpec& spec) {
  std::vector<std::vector<double>> means(spec.classes, std::vector<double>(spec.dim, 0.0));
  for (std::size_t i = 0; i < spec.classes; ++i) {
    means[i][i % spec.dim] = i < spec.dim ? 1.0 : -1.0;
  }
  return means;
}

std::vector<std::vector<double>> rejection_layout(const SyntheticSpec& spec, double c) {
  Rng rng(derive_seed(spec.seed, kLayoutStream, 0));
  std::vector<std::vector<double>> means;
  while (means.size() < spec.classes) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRejectionAttempts && !placed; ++attempt) {
      std::vector<double> v(spec.dim);
      double norm = 0.0;
      for (double& x : v) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      for (double& x : v) x /= norm;
      placed = std::all_of(means.begin(), means.end(), [&](const std::vector<double>& m) {
        double dot = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * m[i];
        return dot <= c;
      });
      if (placed) means.push_back(std::move(v));
    }
    if (!placed) {
      infeasible(spec, "no placement found after " + std::to_string(kMaxRejectionAttempts) + " attempts");
    }
  }
  return means;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (classes < 2) throw Error(ErrorCode::kInvalidArgument, "synthetic spec needs at least 2 classes");
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "synthetic spec dim must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw Error(ErrorCode::kInvalidArgument, "noise sigma must be finite and non-negative");
  }
  if (!spread.empty() && spread.size() != classes) {
    throw Error(ErrorCode::kInvalidArgument, "spread needs one entry per class");
  }
  for (double s : spread) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw Error(ErrorCode::kInvalidArgument, "spread must be non-negative");
  }
  if (!(min_angle_deg > 0.0 && min_angle_deg <= 180.0)) {
    throw Error(ErrorCode::kInvalidArgument, "minimum angle must lie in (0, 180] degrees");
  }
}

ClassManifold::ClassManifold(std::vector<std::vector<double>> means, std::vector<double> sigmas)
    : means_(std::move(means)), sigmas_(std::move(sigmas)) {
  if (means_.empty() || means_.size() != sigmas_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "manifold needs one sigma per class mean");
  }
  for (const auto& m : means_) {
    if (m.empty() || m.size() != means_.front().size()) {
      throw Error(ErrorCode::kDimMismatch, "class means must share a positive dim");
    }
  }
}

ClassManifold ClassManifold::from_spec(const SyntheticSpec& spec) {
  spec.validate();
  const double c = pairwise_cos(spec.min_angle_deg);
  std::vector<std::vector<double>> means;
  if (spec.classes <= spec.dim) {
    means = equiangular(spec, c);
  } else if (c == 0.0 && spec.classes <= 2 * std::size_t{spec.dim}) {
    means = signed_axes(spec);
  } else if (c > 0.0) {
    means = rejection_layout(spec, c);
  } else {
    infeasible(spec, "more classes than dimensions at 90 degrees or wider is not constructible");
  }

  std::vector<double> sigmas(spec.classes, spec.noise_sigma);
  for (std::size_t i = 0; i < spec.spread.size(); ++i) sigmas[i] *= spec.spread[i];
  return ClassManifold(std::move(means), std::move(sigmas));
}

double ClassManifold::angle_deg(ClassId a, ClassId b) const {
  const auto& x = mean(a);
  const auto& y = mean(b);
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  return std::acos(std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

FeatureVector ClassManifold::sample(ClassId cls, Rng& rng) const {
  const auto& mu = mean(cls);
  const double s = sigma(cls) / std::sqrt(static_cast<double>(mu.size()));
  std::vector<float> v(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    v[i] = static_cast<float>(s == 0.0 ? mu[i] : mu[i] + s * rng.normal());
  }
  return FeatureVector(std::move(v));
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  ClassManifold manifold = ClassManifold::from_spec(spec);
  ValidationStore store(spec.dim);
  std::vector<LabeledQuery> heldout;
  heldout.reserve(spec.classes * spec.heldout_per_class);
  for (std::uint32_t c = 0; c < spec.classes; ++c) {
    const ClassId cls{c};
    store.set_class_name(cls, "synthetic-" + std::to_string(c));
    Rng rec_rng(derive_seed(spec.seed, kRecordStream, c));
    for (std::size_t i = 0; i < spec.records_per_class; ++i) {
      store.add(cls, manifold.sample(cls, rec_rng));
    }
    Rng held_rng(derive_seed(spec.seed, kHeldoutStream, c));
    for (std::size_t i = 0; i < spec.heldout_per_class; ++i) {
      heldout.push_back(LabeledQuery{
          Query{"heldout-" + std::to_string(c) + "-" + std::to_string(i), cls, manifold.sample(cls, held_rng)},
          cls, false});
    }
  }
  return SyntheticData{std::move(store), std::move(heldout), std::move(manifold)};
}

std::vector<LabeledQuery> simulate_clean(const ClassManifold& manifold, std::span<const ClassId> classes,
                                         std::size_t sessions, int m, std::uint64_t seed) {
  if (classes.empty()) throw Error(ErrorCode::kEmptyInput, "simulate_clean: no classes");
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "trial count m must be at least 1");
  std::vector<LabeledQuery> out;
  out.reserve(sessions * static_cast<std::size_t>(m));
  for (std::size_t s = 0; s < sessions; ++s) {
    Rng rng(derive_seed(seed, kCleanStream, s));
    const ClassId cls = classes[rng.uniform_index(classes.size())];
    for (int t = 0; t < m; ++t) {
      out.push_back(LabeledQuery{
          Query{"clean-" + std::to_string(s) + "-" + std::to_string(t), cls, manifold.sample(cls, rng)},
          cls, false});
    }
  }
  return out;
}

std::vector<LabeledQuery> simulate_triggers(const ClassManifold& manifold, const TriggerSimSpec& spec,
                                            int m, std::uint64_t seed) {
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "trial count m must be at least 1");
  if (spec.target_class.value >= manifold.classes()) {
    throw Error(ErrorCode::kUnknownClass, "trigger target class " + std::to_string(spec.target_class.value) +
                                              " is not in the manifold");
  }
  if (spec.source_class && spec.source_class->value >= manifold.classes()) {
    throw Error(ErrorCode::kUnknownClass, "trigger source class " +
                                              std::to_string(spec.source_class->value) +
                                              " is not in the manifold");
  }
  std::vector<ClassId> donors;
  for (std::uint32_t c = 0; c < manifold.classes(); ++c) {
    if (ClassId{c} != spec.target_class) donors.push_back(ClassId{c});
  }

  std::vector<LabeledQuery> out;
  out.reserve(spec.count * static_cast<std::size_t>(m));
  for (std::size_t s = 0; s < spec.count; ++s) {
    Rng rng(derive_seed(seed, kTriggerStream, s));
    const ClassId source = spec.source_class ? *spec.source_class : donors[rng.uniform_index(donors.size())];
    for (int t = 0; t < m; ++t) {
      out.push_back(LabeledQuery{Query{"trigger-" + std::to_string(s) + "-" + std::to_string(t),
                                       spec.target_class, manifold.sample(source, rng)},
                                 source, true});
    }
  }
  return out;
}

}  // namespace ntd
