// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ntd/error.hpp"
#include "ntd/kvdoc.hpp"

namespace {

using ntd::ErrorCode;
using ntd::KvDocument;

TEST(KvDocument, RenderParseRoundTripKeepsOrder) {
  KvDocument d;
  d.set("zeta", "1");
  d.set("alpha", "two words");
  d.set("empty", "");
  const std::string text = d.render();
  EXPECT_EQ(text, "zeta=1\nalpha=two words\nempty=\n");
  const KvDocument back = KvDocument::parse(text);
  EXPECT_EQ(back.entries(), d.entries());
  EXPECT_EQ(back.render(), text);
}

TEST(KvDocument, ValueMayContainEquals) {
  const KvDocument d = KvDocument::parse("k=a=b;c=d\n");
  EXPECT_EQ(d.require("k"), "a=b;c=d");
}

TEST(KvDocument, SkipsCommentsAndBlankLines) {
  const KvDocument d = KvDocument::parse("# header\n\na=1\r\n");
  ASSERT_EQ(d.entries().size(), 1u);
  EXPECT_EQ(d.get("a"), "1");
  EXPECT_FALSE(d.get("b").has_value());
}

TEST(KvDocument, Errors) {
  KvDocument d;
  d.set("a", "1");
  EXPECT_THROW(d.set("a", "2"), ntd::Error);
  EXPECT_THROW(d.set("b=c", "2"), ntd::Error);
  EXPECT_THROW(d.set("b", "x\ny"), ntd::Error);
  try {
    (void)d.require("missing");
    FAIL();
  } catch (const ntd::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
  EXPECT_THROW((void)KvDocument::parse("novalue\n"), ntd::Error);
  EXPECT_THROW((void)KvDocument::parse("a=1\na=2\n"), ntd::Error);
}

TEST(Reals, SeventeenDigitsRoundTripBitExact) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const double v = d(gen) * std::pow(10.0, static_cast<int>(gen() % 20) - 10);
    const std::string s = ntd::format_real17(v);
    ASSERT_EQ(ntd::parse_real(s), v) << s;
    ASSERT_EQ(ntd::format_real17(ntd::parse_real(s)), s);
  }
}

TEST(Reals, ShortestRoundTripsFloatsAndDoubles) {
  EXPECT_EQ(ntd::format_shortest(0.05), "0.05");
  EXPECT_EQ(ntd::format_shortest(0.1f), "0.1");
  std::mt19937 gen(4);
  std::uniform_real_distribution<float> d(-10.0f, 10.0f);
  for (int i = 0; i < 10000; ++i) {
    const float f = d(gen);
    ASSERT_EQ(static_cast<float>(ntd::parse_real(ntd::format_shortest(f))), f);
  }
}

TEST(Integers, ParseStrictly) {
  EXPECT_EQ(ntd::parse_u64("18446744073709551615"), std::numeric_limits<std::uint64_t>::max());
  EXPECT_EQ(ntd::parse_i64("-7"), -7);
  EXPECT_THROW((void)ntd::parse_u64("12x"), ntd::Error);
  EXPECT_THROW((void)ntd::parse_u64("-1"), ntd::Error);
  EXPECT_THROW((void)ntd::parse_u64(""), ntd::Error);
  EXPECT_THROW((void)ntd::parse_real("1.0.0"), ntd::Error);
}

}  // namespace
