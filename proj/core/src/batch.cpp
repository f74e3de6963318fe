// SPDX-License-Identifier: Apache-2.0
#include "ntd/batch.hpp"

#include <charconv>
#include <cmath>
#include <istream>

#include "ntd/error.hpp"
#include "ntd/kvdoc.hpp"

namespace ntd {

namespace {

bool skippable(std::string_view line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string_view::npos || line[first] == '#';
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

template <typename T, typename Parse>
std::vector<T> read_lines(std::istream& in, Parse parse) {
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    try {
      out.push_back(parse(trim_cr(line)));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<float> parse_reals(std::string_view text) {
  std::vector<float> out;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    if (p == end) break;
    float v = 0.0f;
    const auto res = std::from_chars(p, end, v);
    if (res.ec == std::errc::result_out_of_range) {
      throw Error(ErrorCode::kNonFinite, "value out of float range at column " + std::to_string(p - text.data() + 1));
    }
    if (res.ec != std::errc{} || (res.ptr != end && *res.ptr != ' ' && *res.ptr != '\t')) {
      throw Error(ErrorCode::kParse, "malformed real at column " + std::to_string(p - text.data() + 1));
    }
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFinite, "non-finite value at column " + std::to_string(p - text.data() + 1));
    }
    out.push_back(v);
    p = res.ptr;
  }
  return out;
}

Query parse_query_line(std::string_view line) {
  const auto t1 = line.find('\t');
  const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
  if (t2 == std::string_view::npos) {
    throw Error(ErrorCode::kParse, "expected input_id<TAB>class<TAB>embedding");
  }
  Query q;
  q.input_id = std::string(line.substr(0, t1));
  if (q.input_id.empty()) throw Error(ErrorCode::kParse, "empty input_id");
  const auto cls = parse_u64(line.substr(t1 + 1, t2 - t1 - 1));
  if (cls > 0xffffffffULL) throw Error(ErrorCode::kParse, "class id out of range");
  q.predicted_class = ClassId{static_cast<std::uint32_t>(cls)};
  q.embedding = FeatureVector(parse_reals(line.substr(t2 + 1)));
  if (q.embedding.dim() == 0) throw Error(ErrorCode::kParse, "empty embedding");
  return q;
}

std::vector<Query> read_query_batch(std::istream& in) { return read_lines<Query>(in, parse_query_line); }

std::pair<std::string, FeatureVector> parse_embedding_line(std::string_view line) {
  const auto sep = line.find_first_of(" \t");
  if (sep == 0 || sep == std::string_view::npos) {
    throw Error(ErrorCode::kParse, "expected input_id followed by reals");
  }
  FeatureVector v(parse_reals(line.substr(sep + 1)));
  if (v.dim() == 0) throw Error(ErrorCode::kParse, "empty embedding");
  return {std::string(line.substr(0, sep)), std::move(v)};
}

std::vector<std::pair<std::string, FeatureVector>> read_embedding_lines(std::istream& in) {
  return read_lines<std::pair<std::string, FeatureVector>>(in, parse_embedding_line);
}

std::string format_query_line(const Query& q) {
  std::string out = q.input_id;
  out += '\t';
  out += std::to_string(q.predicted_class.value);
  out += '\t';
  const auto values = q.embedding.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_shortest(values[i]);
  }
  return out;
}

std::string format_verdict_line(std::string_view input_id, const Verdict& v) {
  std::string out(input_id);
  out += '\t';
  out += decision_name(v.decision);
  out += '\t';
  out += format_real17(v.score);
  out += '\t';
  out += format_real17(v.threshold);
  return out;
}

}  // namespace ntd
