#include <gtest/gtest.h>

#include <map>
#include <set>

#include "sumask/hashing.hpp"

using namespace sumask;

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex("").size(), 64u);
}

TEST(StableHash, DeterministicAndSeedSensitive) {
  EXPECT_EQ(stable_hash64("relation"), stable_hash64("relation"));
  EXPECT_NE(stable_hash64("relation"), stable_hash64("relation", 1));
  EXPECT_NE(stable_hash64("a"), stable_hash64("b"));
}

TEST(StableHash, UnitIntervalRange) {
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = unit_interval(splitmix64(i));
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  EXPECT_EQ(unit_interval(0), 0.0);
  EXPECT_LT(unit_interval(~std::uint64_t{0}), 1.0);
}

TEST(SeededRng, SameSeedSameStream) {
  SeededRng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.below(1000);
    EXPECT_EQ(x, b.below(1000));
    differs = differs || x != c.below(1000);
  }
  EXPECT_TRUE(differs);
}

TEST(SeededRng, BelowIsInRangeAndRoughlyUniform) {
  SeededRng rng(7);
  std::map<std::uint64_t, int> counts;
  for (int i = 0; i < 60000; ++i) {
    const auto x = rng.below(6);
    ASSERT_LT(x, 6u);
    ++counts[x];
  }
  for (const auto& [_, c] : counts) EXPECT_NEAR(c, 10000, 500);
  EXPECT_EQ(SeededRng(1).below(1), 0u);
}
