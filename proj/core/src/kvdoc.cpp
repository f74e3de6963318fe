// SPDX-License-Identifier: Apache-2.0
#include "ntd/kvdoc.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "ntd/error.hpp"

namespace ntd {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
std::string to_chars_string(T v, std::chars_format fmt, std::optional<int> precision) {
  std::array<char, 64> buf{};
  auto res = precision ? std::to_chars(buf.data(), buf.data() + buf.size(), v, fmt, *precision)
                       : std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace

void KvDocument::set(std::string key, std::string value) {
  if (key.empty() || key.find_first_of("=\n") != std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "invalid document key '" + key + "'");
  }
  if (value.find('\n') != std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "document value for '" + key + "' contains a newline");
  }
  if (get(key)) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate document key '" + key + "'");
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

std::optional<std::string_view> KvDocument::get(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) {
      return std::string_view(v);
    }
  }
  return std::nullopt;
}

std::string_view KvDocument::require(std::string_view key) const {
  auto v = get(key);
  if (!v) {
    throw Error(ErrorCode::kParse, "missing key '" + std::string(key) + "'");
  }
  return *v;
}

std::string KvDocument::render() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

KvDocument KvDocument::parse(std::string_view text) {
  KvDocument doc;
  std::size_t lineno = 0;
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || trim(line).front() == '#') {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": empty key");
    }
    if (doc.get(key)) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    doc.entries_.emplace_back(std::move(key), std::string(line.substr(eq + 1)));
  }
  return doc;
}

std::string format_real17(double v) { return to_chars_string(v, std::chars_format::general, 17); }
std::string format_shortest(double v) { return to_chars_string(v, std::chars_format::general, std::nullopt); }
std::string format_shortest(float v) { return to_chars_string(v, std::chars_format::general, std::nullopt); }

double parse_real(std::string_view text) {
  text = trim(text);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorCode::kParse, "not a real number: '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view text) {
  text = trim(text);
  std::uint64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorCode::kParse, "not an unsigned integer: '" + std::string(text) + "'");
  }
  return v;
}

std::int64_t parse_i64(std::string_view text) {
  text = trim(text);
  std::int64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorCode::kParse, "not an integer: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace ntd
