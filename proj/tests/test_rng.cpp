#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "ebm/rng.hpp"
#include "ebm/types.hpp"

namespace ebm {
namespace {

TEST(Rng, SameSeedAndStreamRepeat) {
  Rng a(7, 3), b(7, 3);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StreamsDiffer) {
  Rng a(7, 1), b(7, 2);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += a.next_u64() == b.next_u64();
  EXPECT_EQ(equal, 0);
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(Rng, NormalMoments) {
  Rng r(2);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s1 += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(Rng, BelowIsInRangeAndRejectsZero) {
  Rng r(3);
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 50000; ++i) ++hist[r.below(5)];
  for (int h : hist) EXPECT_NEAR(h / 50000.0, 0.2, 0.01);
  EXPECT_THROW(r.below(0), InvalidArgument);
}

TEST(SampleWithoutReplacement, DistinctAndComplete) {
  Rng r(4);
  auto idx = sample_without_replacement(20, 20, r);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(idx[i], i);
  const auto part = sample_without_replacement(100, 10, r);
  EXPECT_EQ(std::set<std::size_t>(part.begin(), part.end()).size(), 10u);
  EXPECT_THROW(sample_without_replacement(3, 4, r), InvalidArgument);
}

}  // namespace
}  // namespace ebm
