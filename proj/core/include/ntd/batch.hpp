// SPDX-License-Identifier: Apache-2.0
//
// Line-oriented text formats shared by the CLI and the gateway tooling.
//
//   query batch:     input_id<TAB>class<TAB>v0 v1 ... v{d-1}
//   embedding line:  input_id v0 v1 ... v{d-1}
//   verdict line:    input_id<TAB>decision<TAB>score<TAB>threshold
//
// Blank lines and lines starting with '#' are skipped.
#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ntd/detect.hpp"

namespace ntd {

/// Space/tab separated reals; throws kParse (kNonFinite for nan/inf).
std::vector<float> parse_reals(std::string_view text);

Query parse_query_line(std::string_view line);
/// Throws kParse naming the 1-based line number of the first bad line.
std::vector<Query> read_query_batch(std::istream& in);

std::pair<std::string, FeatureVector> parse_embedding_line(std::string_view line);
std::vector<std::pair<std::string, FeatureVector>> read_embedding_lines(std::istream& in);

std::string format_query_line(const Query& q);
std::string format_verdict_line(std::string_view input_id, const Verdict& v);

}  // namespace ntd
