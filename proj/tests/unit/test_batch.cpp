// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "ntd/batch.hpp"
#include "ntd/error.hpp"

namespace {

TEST(QueryBatch, ParsesInOrderSkippingComments) {
  std::istringstream in("# comment\nq1\t3\t1 2 3\n\nq2\t0\t-0.5 1e-3 4\r\n");
  const auto batch = ntd::read_query_batch(in);
  ASSERT_EQ(batch.size(), 2u);
  EXPECT_EQ(batch[0].input_id, "q1");
  EXPECT_EQ(batch[0].predicted_class, ntd::ClassId{3});
  EXPECT_EQ(batch[0].embedding, (ntd::FeatureVector{1.0f, 2.0f, 3.0f}));
  EXPECT_EQ(batch[1].input_id, "q2");
  EXPECT_EQ(batch[1].embedding, (ntd::FeatureVector{-0.5f, 1e-3f, 4.0f}));
}

TEST(QueryBatch, FormatParseRoundTrip) {
  const ntd::Query q{"id-7", ntd::ClassId{12}, ntd::FeatureVector{0.1f, -3.25f, 1e-20f}};
  const ntd::Query back = ntd::parse_query_line(ntd::format_query_line(q));
  EXPECT_EQ(back.input_id, q.input_id);
  EXPECT_EQ(back.predicted_class, q.predicted_class);
  EXPECT_EQ(back.embedding, q.embedding);
}

TEST(QueryBatch, ErrorsNameTheLine) {
  std::istringstream in("q1\t3\t1 2 3\nq2\tx\t1 2 3\n");
  try {
    (void)ntd::read_query_batch(in);
    FAIL();
  } catch (const ntd::Error& e) {
    EXPECT_EQ(e.code(), ntd::ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(QueryBatch, RejectsMalformedLines) {
  EXPECT_THROW((void)ntd::parse_query_line("q1 3 1 2 3"), ntd::Error);
  EXPECT_THROW((void)ntd::parse_query_line("q1\t3\t"), ntd::Error);
  EXPECT_THROW((void)ntd::parse_query_line("q1\t3\t1 two 3"), ntd::Error);
  EXPECT_THROW((void)ntd::parse_query_line("\t3\t1"), ntd::Error);
  try {
    (void)ntd::parse_query_line("q1\t3\t1 nan 3");
    FAIL();
  } catch (const ntd::Error& e) {
    EXPECT_EQ(e.code(), ntd::ErrorCode::kNonFinite);
  }
}

TEST(EmbeddingLines, ParseIdThenReals) {
  std::istringstream in("img_001 0.5 0.25\nimg_002\t1 2\n");
  const auto lines = ntd::read_embedding_lines(in);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].first, "img_001");
  EXPECT_EQ(lines[0].second, (ntd::FeatureVector{0.5f, 0.25f}));
  EXPECT_EQ(lines[1].first, "img_002");
  EXPECT_THROW((void)ntd::parse_embedding_line("lonely"), ntd::Error);
}

TEST(VerdictLine, TabSeparatedFourColumns) {
  ntd::Verdict v;
  v.decision = ntd::Decision::kTrigger;
  v.score = 0.25;
  v.threshold = 0.5;
  EXPECT_EQ(ntd::format_verdict_line("q9", v), "q9\ttrigger\t0.25\t0.5");
}

}  // namespace
