#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lookdown/error.hpp"
#include "lookdown/rng.hpp"
#include "lookdown/stats.hpp"

using namespace lookdown;

namespace {

std::vector<double> first_doubles(RngStream s, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(s.uniform_open_closed());
  return out;
}

}  // namespace

TEST(Rng, SameKeySameSequence) {
  EXPECT_EQ(first_doubles(make_stream(1, 0), 100), first_doubles(make_stream(1, 0), 100));
}

TEST(Rng, DistinctIdsDiffer) {
  const auto a = first_doubles(make_stream(1, 0), 100);
  const auto b = first_doubles(make_stream(1, 1), 100);
  for (int i = 0; i < 100; ++i) EXPECT_NE(a[i], b[i]) << i;
}

TEST(Rng, DistinctSeedsDiffer) {
  const auto a = first_doubles(make_stream(2, 0), 100);
  const auto b = first_doubles(make_stream(1, 0), 100);
  for (int i = 0; i < 100; ++i) EXPECT_NE(a[i], b[i]) << i;
}

TEST(Rng, DerivedIdsAreDistinct) {
  std::vector<std::uint64_t> ids;
  for (std::uint64_t e = 1; e <= 8; ++e)
    for (std::uint64_t i = 0; i < 2000; ++i) ids.push_back(derive_stream_id(e, i));
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(std::adjacent_find(ids.begin(), ids.end()), ids.end());
}

TEST(Rng, UniformIsInOpenClosedUnit) {
  auto s = make_stream(3, 3);
  for (int i = 0; i < 100000; ++i) {
    const double u = s.uniform_open_closed();
    ASSERT_GT(u, 0.0);
    ASSERT_LE(u, 1.0);
  }
}

TEST(Rng, UniformIndexIsUnbiased) {
  auto s = make_stream(4, 0);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[s.uniform_index(7)];
  for (const int c : counts) EXPECT_NEAR(c, n / 7.0, 4.0 * std::sqrt(n / 7.0));
}

TEST(Rng, ExponentialMean) {
  for (const double rate : {1.0, 10.0}) {
    auto s = make_stream(5, static_cast<std::uint64_t>(rate));
    RunningStats st;
    for (int i = 0; i < 1000000; ++i) {
      const double x = sample_exponential(s, rate);
      ASSERT_GT(x, 0.0);
      ASSERT_TRUE(std::isfinite(x));
      st.push(x);
    }
    EXPECT_NEAR(st.mean, 1.0 / rate, 0.01 / rate);
  }
}

TEST(Rng, ExponentialRejectsBadRate) {
  auto s = make_stream(1, 0);
  EXPECT_THROW(sample_exponential(s, 0.0), ParameterError);
  EXPECT_THROW(sample_exponential(s, -1.0), ParameterError);
}

TEST(Rng, PoissonMeanCount) {
  auto s = make_stream(6, 0);
  RunningStats st;
  for (int r = 0; r < 10000; ++r) st.push(static_cast<double>(sample_poisson_times(s, 1.0, 0.0, 10.0).size()));
  EXPECT_LT(std::abs(st.mean - 10.0), 3.0 * st.standard_error());
}

TEST(Rng, PoissonEmptyWindow) {
  auto s = make_stream(6, 1);
  EXPECT_TRUE(sample_poisson_times(s, 3.0, 5.0, 5.0).empty());
}

TEST(Rng, PoissonRejectsBadInput) {
  auto s = make_stream(6, 2);
  EXPECT_THROW(sample_poisson_times(s, 1.0, 2.0, 1.0), ParameterError);
  EXPECT_THROW(sample_poisson_times(s, 0.0, 0.0, 1.0), ParameterError);
}

TEST(Rng, PoissonDispersion) {
  auto s = make_stream(7, 0);
  RunningStats st;
  for (int r = 0; r < 10000; ++r) st.push(static_cast<double>(sample_poisson_times(s, 9.0, 0.0, 2.0).size()));
  EXPECT_NEAR(st.variance() / st.mean, 1.0, 0.05);
}

TEST(Rng, PoissonTimesStrictlyIncreasingInWindow) {
  auto s = make_stream(8, 0);
  const auto times = sample_poisson_times(s, 50.0, -3.0, 4.0);
  ASSERT_FALSE(times.empty());
  EXPECT_GT(times.front(), -3.0);
  EXPECT_LE(times.back(), 4.0);
  for (std::size_t i = 1; i < times.size(); ++i) EXPECT_LT(times[i - 1], times[i]);
}

// Adjacent windows from a continuing stream have the law of the union window.
TEST(Rng, PoissonAdjacentWindowsMatchUnion) {
  auto a = make_stream(9, 0);
  auto b = make_stream(9, 1);
  std::vector<double> split_gaps, union_gaps;
  for (int r = 0; r < 2000; ++r) {
    auto first = sample_poisson_times(a, 2.0, 0.0, 1.0);
    const auto second = sample_poisson_times(a, 2.0, 1.0, 2.0);
    first.insert(first.end(), second.begin(), second.end());
    for (std::size_t i = 1; i < first.size(); ++i) split_gaps.push_back(first[i] - first[i - 1]);
    const auto whole = sample_poisson_times(b, 2.0, 0.0, 2.0);
    for (std::size_t i = 1; i < whole.size(); ++i) union_gaps.push_back(whole[i] - whole[i - 1]);
  }
  EXPECT_GT(ks_two_sample(split_gaps, union_gaps).p_value, 0.001);
}

TEST(Rng, CopiedStreamReplays) {
  auto s = make_stream(10, 0);
  s();
  auto copy = s;
  EXPECT_EQ(s, copy);
  EXPECT_EQ(s(), copy());
}
