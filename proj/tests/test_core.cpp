#include <gtest/gtest.h>

#include <set>

#include "mmner/core.hpp"

using namespace mmner;

TEST(Core, ClassNamesRoundTrip) {
  for (auto c : kAllClasses) EXPECT_EQ(parse_ner_class(to_string(c)), c);
  EXPECT_EQ(parse_ner_class("O"), NERClass::NONE);
  EXPECT_FALSE(parse_ner_class("MISC").has_value());
}

TEST(Core, ErrorsCarryKind) {
  try {
    throw ConfigError("bad");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "ConfigError");
    EXPECT_STREQ(e.what(), "bad");
  }
}

TEST(Core, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Core, NormalizeTerm) {
  EXPECT_EQ(normalize_term("  Paris   Hilton "), "paris hilton");
  EXPECT_EQ(normalize_term("miCRs0ft"), "micrs0ft");
}

TEST(Core, SplitHelpers) {
  EXPECT_EQ(split("a\t\tb", '\t'), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(split_ws("  a b\t c "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(trim(" \t x y \n"), "x y");
}

TEST(Core, RngHelpersAreReproducibleAndInRange) {
  Rng a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    double u = uniform01(a);
    EXPECT_EQ(u, uniform01(b));
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(uniform_index(a, 7), 7u);
    uniform_index(b, 7);
  }
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  Rng r(9);
  shuffle(v, r);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 8u);
}
