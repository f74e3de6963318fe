// SPDX-License-Identifier: Apache-2.0
#include "ntd/featstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "ntd/error.hpp"

namespace ntd {

namespace {

constexpr std::uint8_t kMagic[4] = {'N', 'T', 'D', 'F'};

// Little-endian store at `at`; returns the next offset.
std::size_t put_u32(std::vector<std::uint8_t>& out, std::size_t at, std::uint32_t v) {
  out[at] = static_cast<std::uint8_t>(v & 0xffu);
  out[at + 1] = static_cast<std::uint8_t>((v >> 8) & 0xffu);
  out[at + 2] = static_cast<std::uint8_t>((v >> 16) & 0xffu);
  out[at + 3] = static_cast<std::uint8_t>((v >> 24) & 0xffu);
  return at + 4;
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return static_cast<std::uint32_t>(bytes[offset]) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 8) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 3]) << 24);
}

std::string class_label(ClassId cls) { return "class " + std::to_string(cls.value); }

}  // namespace

bool FeatureVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

bool operator==(const FeatureVector& a, const FeatureVector& b) noexcept {
  return a.values_.size() == b.values_.size() &&
         (a.values_.empty() ||
          std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(float)) == 0);
}

ValidationStore::ValidationStore(std::uint32_t dim) : dim_(dim) {
  if (dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "validation store dim must be positive");
  }
}

void ValidationStore::add(ClassId cls, FeatureVector vec) {
  if (vec.dim() != dim_) {
    throw Error(ErrorCode::kDimMismatch, "vector of length " + std::to_string(vec.dim()) +
                                             " added to store of dim " + std::to_string(dim_));
  }
  index_[cls].push_back(records_.size());
  records_.push_back(Record{cls, std::move(vec)});
}

void ValidationStore::set_class_name(ClassId cls, std::string name) {
  names_[cls] = std::move(name);
}

std::optional<std::string> ValidationStore::class_name(ClassId cls) const {
  if (auto it = names_.find(cls); it != names_.end()) {
    return it->second;
  }
  return std::nullopt;
}

std::size_t ValidationStore::class_size(ClassId cls) const {
  auto it = index_.find(cls);
  return it == index_.end() ? 0 : it->second.size();
}

const std::vector<std::size_t>& ValidationStore::positions(ClassId cls) const {
  auto it = index_.find(cls);
  if (it == index_.end()) {
    throw Error(ErrorCode::kUnknownClass, class_label(cls) + " is not present in the validation store");
  }
  return it->second;
}

std::vector<ClassId> ValidationStore::classes() const {
  std::vector<ClassId> out;
  out.reserve(index_.size());
  for (const auto& [cls, _] : index_) {
    out.push_back(cls);
  }
  return out;
}

void ValidationStore::validate() const {
  std::size_t indexed = 0;
  for (const auto& [cls, list] : index_) {
    for (std::size_t pos : list) {
      if (pos >= records_.size() || records_[pos].cls != cls) {
        throw Error(ErrorCode::kInvalidArgument, "store index entry for " + class_label(cls) +
                                                     " points at a foreign record");
      }
    }
    indexed += list.size();
  }
  if (indexed != records_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "store index does not cover every record");
  }
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& rec = records_[i];
    if (rec.vec.dim() != dim_) {
      throw Error(ErrorCode::kDimMismatch, "record " + std::to_string(i) + " has wrong length");
    }
    if (!rec.vec.all_finite()) {
      throw Error(ErrorCode::kNonFinite, "record " + std::to_string(i) + " (" +
                                             class_label(rec.cls) + ") contains NaN or Inf");
    }
  }
}

bool operator==(const ValidationStore& a, const ValidationStore& b) {
  return a.dim_ == b.dim_ && a.records_ == b.records_ && a.index_ == b.index_;
}

std::vector<std::uint8_t> encode_ntdf(const ValidationStore& store) {
  store.validate();
  if (store.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::kOverflow, "record count does not fit the NTDF u32 header field");
  }
  std::vector<std::uint8_t> out(kNtdfHeaderBytes + store.size() * (4 + 4 * std::size_t{store.dim()}));
  std::copy(std::begin(kMagic), std::end(kMagic), out.begin());
  std::size_t at = sizeof kMagic;
  at = put_u32(out, at, kNtdfVersion);
  at = put_u32(out, at, store.dim());
  at = put_u32(out, at, static_cast<std::uint32_t>(store.size()));
  at = put_u32(out, at, 0);
  for (const auto& rec : store.records()) {
    at = put_u32(out, at, rec.cls.value);
    for (float v : rec.vec.values()) {
      at = put_u32(out, at, std::bit_cast<std::uint32_t>(v));
    }
  }
  return out;
}

ValidationStore decode_ntdf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kNtdfHeaderBytes) {
    throw Error(ErrorCode::kTruncated, "NTDF header truncated at byte offset " +
                                           std::to_string(bytes.size()));
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw Error(ErrorCode::kBadMagic, "bad magic: not an NTDF file");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kNtdfVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, "unsupported NTDF version " + std::to_string(version));
  }
  const std::uint32_t dim = get_u32(bytes, 8);
  const std::uint32_t count = get_u32(bytes, 12);
  if (get_u32(bytes, 16) != 0) {
    throw Error(ErrorCode::kParse, "NTDF reserved header field is not zero");
  }
  if (dim == 0) {
    throw Error(ErrorCode::kDimMismatch, "NTDF header declares dim 0");
  }

  const std::size_t record_bytes = 4 + 4 * std::size_t{dim};
  ValidationStore store(dim);
  std::size_t offset = kNtdfHeaderBytes;
  for (std::uint32_t r = 0; r < count; ++r) {
    if (bytes.size() - offset < record_bytes) {
      throw Error(ErrorCode::kTruncated, "NTDF payload truncated in record " + std::to_string(r) +
                                             " starting at byte offset " + std::to_string(offset) +
                                             " (file ends at byte offset " +
                                             std::to_string(bytes.size()) + ")");
    }
    const ClassId cls{get_u32(bytes, offset)};
    offset += 4;
    std::vector<float> values(dim);
    for (std::uint32_t i = 0; i < dim; ++i, offset += 4) {
      values[i] = std::bit_cast<float>(get_u32(bytes, offset));
      if (!std::isfinite(values[i])) {
        throw Error(ErrorCode::kNonFinite, "non-finite element in record " + std::to_string(r) +
                                               " at byte offset " + std::to_string(offset));
      }
    }
    store.add(cls, FeatureVector(std::move(values)));
  }
  if (offset != bytes.size()) {
    throw Error(ErrorCode::kDimMismatch, "NTDF payload has " + std::to_string(bytes.size() - offset) +
                                             " trailing bytes after " + std::to_string(count) +
                                             " records of dim " + std::to_string(dim));
  }
  return store;
}

void store_write(const ValidationStore& store, const std::filesystem::path& path) {
  const auto bytes = encode_ntdf(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::kIo, "write failed for " + path.string());
  }
}

ValidationStore store_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw Error(ErrorCode::kIo, "read failed for " + path.string());
  }
  return decode_ntdf(bytes);
}

void write_manifest(const ValidationStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  for (const auto& [cls, name] : store.class_names()) {
    out << cls.value << '\t' << name << '\n';
  }
  if (!out) {
    throw Error(ErrorCode::kIo, "write failed for " + path.string());
  }
}

void read_manifest(ValidationStore& store, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) +
                                         ": expected id<TAB>name");
    }
    std::uint32_t id = 0;
    try {
      std::size_t used = 0;
      const unsigned long parsed = std::stoul(line.substr(0, tab), &used);
      if (used != tab || parsed > std::numeric_limits<std::uint32_t>::max()) {
        throw std::invalid_argument("id");
      }
      id = static_cast<std::uint32_t>(parsed);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) + ": bad class id");
    }
    store.set_class_name(ClassId{id}, line.substr(tab + 1));
  }
}

ComparisonSet sample_comparison_set(const ValidationStore& store, ClassId cls, std::size_t n,
                                    Rng& rng, std::optional<std::size_t> exclude) {
  if (n == 0) {
    throw Error(ErrorCode::kInvalidArgument, "comparison set size must be positive");
  }
  const auto& all = store.positions(cls);
  std::vector<std::size_t> pool;
  pool.reserve(all.size());
  for (std::size_t pos : all) {
    if (!exclude || pos != *exclude) {
      pool.push_back(pos);
    }
  }
  if (pool.size() < n) {
    throw Error(ErrorCode::kInsufficientRecords,
                class_label(cls) + " has " + std::to_string(pool.size()) +
                    " eligible records, comparison set needs " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);

  ComparisonSet set{cls, std::move(pool), {}};
  set.members.reserve(n);
  for (std::size_t pos : set.positions) {
    set.members.emplace_back(store.record(pos).vec);
  }
  return set;
}

}  // namespace ntd
