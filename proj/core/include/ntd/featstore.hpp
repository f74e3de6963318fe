// SPDX-License-Identifier: Apache-2.0
//
// Feature-vector records, the class-indexed validation store, and the NTDF
// on-disk format.
//
// NTDF layout, little-endian throughout:
//   0..3   magic "NTDF"
//   4..7   version (u32) = 1
//   8..11  dim (u32)
//   12..15 record count (u32)
//   16..19 reserved (u32) = 0
//   then `count` records of { class_id u32, dim x f32 }.
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ntd/rng.hpp"

namespace ntd {

inline constexpr std::uint32_t kNtdfVersion = 1;
inline constexpr std::size_t kNtdfHeaderBytes = 20;
inline constexpr std::size_t kDefaultMinClassRecords = 11;

struct ClassId {
  std::uint32_t value = 0;

  friend auto operator<=>(const ClassId&, const ClassId&) = default;
};

/// Embedding produced by the feature extractor. Stored as 32-bit floats;
/// all similarity arithmetic widens to double.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<float> values) : values_(std::move(values)) {}
  FeatureVector(std::initializer_list<float> values) : values_(values) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  operator std::span<const float>() const noexcept { return values_; }  // NOLINT
  float operator[](std::size_t i) const { return values_[i]; }

  bool all_finite() const noexcept;

  /// Bit-exact comparison (distinguishes -0.0 from 0.0, NaN payloads compare by bits).
  friend bool operator==(const FeatureVector& a, const FeatureVector& b) noexcept;

 private:
  std::vector<float> values_;
};

struct Record {
  ClassId cls;
  FeatureVector vec;

  friend bool operator==(const Record&, const Record&) = default;
};

/// Class-indexed collection of clean validation embeddings: the precomputed
/// lookup table consulted during online detection.
///
/// Build with add(), then share as const; all read paths are thread-safe.
class ValidationStore {
 public:
  explicit ValidationStore(std::uint32_t dim);

  /// Throws kDimMismatch if vec.dim() != dim(). Finiteness is checked by
  /// validate(), which store_write() runs before touching the disk.
  void add(ClassId cls, FeatureVector vec);

  void set_class_name(ClassId cls, std::string name);
  std::optional<std::string> class_name(ClassId cls) const;
  const std::map<ClassId, std::string>& class_names() const noexcept { return names_; }

  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  const Record& record(std::size_t position) const { return records_.at(position); }
  const std::vector<Record>& records() const noexcept { return records_; }

  bool has_class(ClassId cls) const { return index_.contains(cls); }
  std::size_t class_size(ClassId cls) const;
  /// Throws kUnknownClass for absent classes.
  const std::vector<std::size_t>& positions(ClassId cls) const;
  /// Classes in ascending id order.
  std::vector<ClassId> classes() const;
  const std::map<ClassId, std::vector<std::size_t>>& index() const noexcept { return index_; }

  /// Checks every invariant: record dims, finite elements, index coverage.
  void validate() const;

  /// Field-by-field equality of dim, records (bit-exact) and index; class
  /// names live in the sidecar manifest and are not compared.
  friend bool operator==(const ValidationStore& a, const ValidationStore& b);

 private:
  std::uint32_t dim_;
  std::vector<Record> records_;
  std::map<ClassId, std::vector<std::size_t>> index_;
  std::map<ClassId, std::string> names_;
};

void store_write(const ValidationStore& store, const std::filesystem::path& path);
ValidationStore store_read(const std::filesystem::path& path);

/// In-memory encode/decode of the same byte layout (the file functions wrap these).
std::vector<std::uint8_t> encode_ntdf(const ValidationStore& store);
ValidationStore decode_ntdf(std::span<const std::uint8_t> bytes);

/// Sidecar manifest: one `id<TAB>name` line per named class.
void write_manifest(const ValidationStore& store, const std::filesystem::path& path);
void read_manifest(ValidationStore& store, const std::filesystem::path& path);

/// n members of one class, drawn without replacement.
struct ComparisonSet {
  ClassId cls;
  std::vector<std::size_t> positions;
  std::vector<std::reference_wrapper<const FeatureVector>> members;

  std::size_t size() const noexcept { return members.size(); }
};

/// Draws n distinct records of `cls`, never the excluded position.
/// Partial Fisher-Yates over the class's positions; deterministic for a given
/// Rng state.
ComparisonSet sample_comparison_set(const ValidationStore& store, ClassId cls, std::size_t n,
                                    Rng& rng, std::optional<std::size_t> exclude = std::nullopt);

}  // namespace ntd

template <>
struct std::hash<ntd::ClassId> {
  std::size_t operator()(const ntd::ClassId& id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
