#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "towerlab/rng.hpp"

using namespace towerlab;

TEST(Rng, SplitmixMatchesReferenceSequence) {
  // First outputs of the reference splitmix64 generator seeded with 0.
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(splitmix64(0x9e3779b97f4a7c15ULL), 0x6e789e6aa1b965f4ULL);
}

TEST(Rng, FnvMatchesReference) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Rng, StreamsAreReproducible) {
  auto a = Stream::make(42, StreamTag::session, 7);
  auto b = Stream::make(42, StreamTag::session, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DistinctKeysGiveDistinctStreams) {
  auto base = Stream::make(42, StreamTag::session, 7).next_u64();
  EXPECT_NE(base, Stream::make(43, StreamTag::session, 7).next_u64());
  EXPECT_NE(base, Stream::make(42, StreamTag::exploration, 7).next_u64());
  EXPECT_NE(base, Stream::make(42, StreamTag::session, 8).next_u64());
}

TEST(Rng, UniformStaysInUnitInterval) {
  auto s = Stream::make(1, StreamTag::corpus);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Rng, BelowIsUniformOverRange) {
  auto s = Stream::make(2, StreamTag::corpus);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto v = s.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 5.0 * std::sqrt(n / 7.0));
  EXPECT_EQ(s.below(1), 0u);
  EXPECT_EQ(s.below(0), 0u);
}

TEST(Rng, NormalHasUnitMoments) {
  auto s = Stream::make(3, StreamTag::label_noise);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.01);
}

TEST(Rng, ShuffleIsAPermutation) {
  auto s = Stream::make(4, StreamTag::exploration);
  std::vector<int> v(20);
  std::iota(v.begin(), v.end(), 0);
  s.shuffle(std::span<int>(v));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Rng, ShuffleVisitsAllOrdersOfThree) {
  std::vector<int> seen(6, 0);
  for (std::uint64_t k = 0; k < 6000; ++k) {
    auto s = Stream::make(5, StreamTag::exploration, k);
    std::vector<int> v{0, 1, 2};
    s.shuffle(std::span<int>(v));
    ++seen[v[0] * 2 + (v[1] > v[2] ? 1 : 0)];
  }
  for (int c : seen) EXPECT_NEAR(c, 1000, 150);
}

TEST(Rng, StreamKeyIsConstexpr) {
  constexpr auto k = stream_key(1, 2, 3);
  static_assert(k != 0);
  EXPECT_EQ(k, stream_key(1, 2, 3));
}
