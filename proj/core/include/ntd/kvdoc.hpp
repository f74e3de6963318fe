// SPDX-License-Identifier: Apache-2.0
//
// Flat `key=value` text documents, used for threshold tables and for the
// gateway's request/response payloads. One entry per line, keys unique,
// order preserved as written. Blank lines and lines starting with '#' are
// ignored on parse.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ntd {

class KvDocument {
 public:
  /// Throws kInvalidArgument on duplicate keys, '=' or newlines in keys, or
  /// newlines in values.
  void set(std::string key, std::string value);

  std::optional<std::string_view> get(std::string_view key) const;
  /// Throws kParse naming the missing key.
  std::string_view require(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

  std::string render() const;
  static KvDocument parse(std::string_view text);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// 17 significant digits, so a parse/render cycle is byte-stable.
std::string format_real17(double v);
/// Shortest representation that round-trips.
std::string format_shortest(double v);
std::string format_shortest(float v);

double parse_real(std::string_view text);
std::uint64_t parse_u64(std::string_view text);
std::int64_t parse_i64(std::string_view text);

}  // namespace ntd
