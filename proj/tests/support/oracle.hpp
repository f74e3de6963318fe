// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels for tests. Written independently of the library: long
// double accumulation and textbook single-pass formulas.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace oracle {

using Real = long double;

inline Real dot(std::span<const float> a, std::span<const float> b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<Real>(a[i]) * static_cast<Real>(b[i]);
  return s;
}

inline Real cosine(std::span<const float> a, std::span<const float> b) {
  return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

// Single-pass sums: (N sum ab - sum a sum b) / sqrt((N sum a^2 - (sum a)^2)(N sum b^2 - (sum b)^2)).
inline Real pearson(std::span<const float> a, std::span<const float> b) {
  const Real n = static_cast<Real>(a.size());
  Real sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Real x = a[i], y = b[i];
    sa += x;
    sb += y;
    saa += x * x;
    sbb += y * y;
    sab += x * y;
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

inline Real tanimoto_standard(std::span<const float> a, std::span<const float> b) {
  const Real ab = dot(a, b);
  return ab / (dot(a, a) + dot(b, b) - ab);
}

inline Real tanimoto_root_norm(std::span<const float> a, std::span<const float> b) {
  const Real ab = dot(a, b);
  return ab / (std::sqrt(dot(a, a)) + std::sqrt(dot(b, b)) - ab);
}

/// Scans ranks upward: the first sorted value whose 1-based rank reaches p N.
inline double low_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const long double target = static_cast<long double>(p) * v.size();
  for (std::size_t k = 1; k <= v.size(); ++k) {
    if (static_cast<long double>(k) + 1e-9L >= target) return v[k - 1];
  }
  return v.back();
}

inline std::vector<float> random_vector(std::mt19937_64& gen, std::size_t dim) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (float& x : v) x = d(gen);
  return v;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ntd-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
